"""HTTP surfaces: mock model services and the review service."""
