import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    // the round-trip suite boots the Python review service
    testTimeout: 120000,
    hookTimeout: 120000,
  },
});
