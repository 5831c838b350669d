"""Command-line interface.

Subcommands cover the whole workflow: generate an augmented dataset,
audit it, review flagged annotations over HTTP, evaluate detection dumps,
and host mock model services for offline runs. Logs are JSON lines on
stderr; primary results go to files, with a short JSON summary on stdout.

Settings resolve in precedence order: command-line flags, then the
environment (INPAINT_URL, DETECT_URL, SYNOE_CONFIG), then a flat
"key = value" config file, then built-in defaults.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Optional

import click

from . import audit as audit_mod
from . import metrics as metrics_mod
from .augment import run_pipeline, select_variant
from .errors import SynoeError
from .model import load_manifest, save_manifest
from .prompts import default_catalog, load_catalog, lostandfound_extension, merge_catalogs
from .review import ReviewStore
from .services import (
    DEFAULT_BOX_THRESHOLD,
    DEFAULT_TEXT_THRESHOLD,
    HttpDetector,
    HttpInpainter,
    MockDetector,
    MockInpainter,
)

CONFIG_ENV = "SYNOE_CONFIG"
INPAINT_ENV = "INPAINT_URL"
DETECT_ENV = "DETECT_URL"

logger = logging.getLogger("synoe")


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {
            "ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            doc["exc"] = self.formatException(record.exc_info)
        return json.dumps(doc, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat config file: one "key = value" per line, '#' comments."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise click.UsageError(f"{path}:{line_no}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip().strip("\"'")
    return out


def resolve_settings(
    config_path: Optional[str],
    inpaint_url: Optional[str],
    detect_url: Optional[str],
    box_threshold: Optional[float],
    text_threshold: Optional[float],
) -> dict[str, Any]:
    """Flags > environment > config file > defaults."""
    file_path = config_path or os.environ.get(CONFIG_ENV)
    file_cfg = load_config_file(file_path) if file_path else {}

    def pick(flag: Any, env_name: Optional[str], key: str, default: Any, cast: Callable[[str], Any]) -> Any:
        if flag is not None:
            return flag
        if env_name and os.environ.get(env_name):
            return cast(os.environ[env_name])
        if key in file_cfg:
            return cast(file_cfg[key])
        return default

    return {
        "inpaint_url": pick(inpaint_url, INPAINT_ENV, "inpaint_url", None, str),
        "detect_url": pick(detect_url, DETECT_ENV, "detect_url", None, str),
        "box_threshold": pick(box_threshold, None, "box_threshold", DEFAULT_BOX_THRESHOLD, float),
        "text_threshold": pick(text_threshold, None, "text_threshold", DEFAULT_TEXT_THRESHOLD, float),
    }


def _emit(doc: dict[str, Any]) -> None:
    click.echo(json.dumps(doc, sort_keys=True))


def handles_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Exit-code contract: 1 for anything wrong with the inputs, 2 for an
    unexpected crash. Click usage errors propagate to the group, which maps
    them to 1 as well."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except SynoeError as exc:
            logger.error("%s: %s", type(exc).__name__, exc)
            sys.exit(1)
        except OSError as exc:
            logger.error("io error: %s", exc)
            sys.exit(1)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001
            logger.exception("unexpected error: %s", exc)
            sys.exit(2)

    return wrapper


class ExitCodeGroup(click.Group):
    """Group whose usage errors exit 1 (validation failure), not click's 2."""

    def main(self, *args: Any, standalone_mode: bool = True, **kwargs: Any) -> Any:
        if not standalone_mode:
            return super().main(*args, standalone_mode=False, **kwargs)
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        except click.UsageError as exc:
            exc.show()
            sys.exit(1)
        except click.ClickException as exc:
            exc.show()
            sys.exit(exc.exit_code)
        sys.exit(rv if isinstance(rv, int) else 0)


@click.group(cls=ExitCodeGroup)
@click.option("--verbose", is_flag=True, help="Debug-level logging.")
def main(verbose: bool) -> None:
    """Synthetic outlier insertion and evaluation for street-scene datasets."""
    _setup_logging(verbose)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", required=True, type=click.Choice(["V1", "V2", "V3", "V4", "V5"]))
@click.option("--proportion", type=float, default=1.0, show_default=True, help="Share of images to augment.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--prompts", "prompts_path", type=click.Path(exists=True, dir_okay=False), help="Replace the base prompt list.")
@click.option("--inpaint-url", default=None, help="Inpainting service base URL.")
@click.option("--detect-url", default=None, help="Detection service base URL.")
@click.option("--mock", is_flag=True, help="Use in-process mock services.")
@click.option("--mock-noop-rate", type=float, default=0.0, show_default=True, help="Mock: share of crops returned unchanged.")
@click.option("--mock-erase-rate", type=float, default=0.0, show_default=True, help="Mock: share of crops erased without a new object.")
@click.option("--box-threshold", type=float, default=None, help=f"Detector box threshold (default {DEFAULT_BOX_THRESHOLD}).")
@click.option("--text-threshold", type=float, default=None, help=f"Detector text threshold (default {DEFAULT_TEXT_THRESHOLD}).")
@click.option("--workers", type=int, default=None, help="Parallel image workers.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Flat key=value config file.")
@click.option("--drop-class", "drop_classes", multiple=True, help="Remove a category (and its annotations) at load.")
@handles_errors
def generate(
    input_path: str,
    variant: str,
    proportion: float,
    seed: int,
    out_dir: str,
    prompts_path: Optional[str],
    inpaint_url: Optional[str],
    detect_url: Optional[str],
    mock: bool,
    mock_noop_rate: float,
    mock_erase_rate: float,
    box_threshold: Optional[float],
    text_threshold: Optional[float],
    workers: Optional[int],
    config_path: Optional[str],
    drop_classes: tuple[str, ...],
) -> None:
    """Insert synthetic outlier objects into a dataset."""
    settings = resolve_settings(config_path, inpaint_url, detect_url, box_threshold, text_threshold)
    manifest = load_manifest(input_path, drop_classes=drop_classes)
    policy = select_variant(variant, ood_image_proportion=proportion)

    if prompts_path:
        catalog = load_catalog(prompts_path)
        if policy.lostandfound_prompts:
            catalog = merge_catalogs(catalog, lostandfound_extension())
    else:
        catalog = default_catalog(policy.lostandfound_prompts)

    if mock:
        inpainter: Any = MockInpainter(seed=seed, noop_rate=mock_noop_rate, erase_rate=mock_erase_rate)
        detector: Any = MockDetector(
            box_threshold=settings["box_threshold"], text_threshold=settings["text_threshold"], seed=seed
        )
    else:
        if not settings["inpaint_url"] or not settings["detect_url"]:
            raise click.UsageError(
                "service URLs required: pass --inpaint-url/--detect-url, set "
                f"{INPAINT_ENV}/{DETECT_ENV}, or use --mock"
            )
        inpainter = HttpInpainter(settings["inpaint_url"])
        detector = HttpDetector(
            settings["detect_url"],
            box_threshold=settings["box_threshold"],
            text_threshold=settings["text_threshold"],
        )

    config_echo = {
        "input": str(input_path),
        "variant": variant,
        "proportion": proportion,
        "seed": seed,
        "mock": mock,
        "prompts": str(prompts_path) if prompts_path else "packaged",
        "box_threshold": settings["box_threshold"],
        "text_threshold": settings["text_threshold"],
        "inpaint_url": settings["inpaint_url"] if not mock else None,
        "detect_url": settings["detect_url"] if not mock else None,
        "drop_classes": sorted(drop_classes),
    }
    out_manifest, report = run_pipeline(
        manifest,
        policy,
        catalog,
        inpainter,
        detector,
        seed=seed,
        out_dir=out_dir,
        base_dir=Path(input_path).parent,
        workers=workers,
        config_echo=config_echo,
    )
    logger.info(
        "generate: %d/%d images augmented (%d regions), %d placement failures, %d service errors",
        report.images_augmented,
        report.images_total,
        report.regions_inpainted,
        report.placement_failures,
        report.service_errors,
    )
    _emit(
        {
            "manifest": str(Path(out_dir) / "manifest.json"),
            "report": str(Path(out_dir) / "report.json"),
            "evidence": str(Path(out_dir) / "evidence.json"),
            "images_augmented": report.images_augmented,
            "annotations": len(out_manifest.annotations),
        }
    )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--evidence", "evidence_path", type=click.Path(exists=True, dir_okay=False), help="Defaults to evidence.json next to the manifest.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@handles_errors
def audit(
    manifest_path: str,
    evidence_path: Optional[str],
    out_path: str,
    report_path: Optional[str],
) -> None:
    """Check outlier annotations against their detector evidence."""
    manifest = load_manifest(manifest_path)
    if evidence_path is None:
        sibling = Path(manifest_path).parent / "evidence.json"
        evidence = audit_mod.load_evidence(sibling) if sibling.exists() else {}
    else:
        evidence = audit_mod.load_evidence(evidence_path)
    audited, report = audit_mod.audit_manifest(manifest, evidence)
    save_manifest(audited, out_path)
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    _emit(report.to_json_dict())


@main.command()
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dets", "dets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--class-agnostic", is_flag=True, help="Collapse all categories before scoring.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Write the JSON report here.")
@handles_errors
def eval(gt_path: str, dets_path: str, class_agnostic: bool, out_path: Optional[str]) -> None:
    """Score a detection dump against a manifest."""
    manifest = load_manifest(gt_path)
    dump = metrics_mod.load_dump(dets_path)
    report = metrics_mod.evaluate(manifest, dump, class_agnostic=class_agnostic)
    click.echo(report.format_table())
    if out_path:
        Path(out_path).write_text(
            json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--journal", "journal_path", required=True, type=click.Path(dir_okay=False))
@click.option("--evidence", "evidence_path", type=click.Path(exists=True, dir_okay=False), help="Defaults to evidence.json next to the manifest.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), help="Serve a built web UI from this directory.")
@handles_errors
def review(
    manifest_path: str,
    journal_path: str,
    evidence_path: Optional[str],
    host: str,
    port: int,
    ui_dir: Optional[str],
) -> None:
    """Serve the human review API (and optionally the web UI)."""
    import uvicorn

    from .server.review_app import create_review_app

    manifest = load_manifest(manifest_path)
    if evidence_path is None:
        sibling = Path(manifest_path).parent / "evidence.json"
        evidence = audit_mod.load_evidence(sibling) if sibling.exists() else {}
    else:
        evidence = audit_mod.load_evidence(evidence_path)
    store = ReviewStore(
        manifest,
        evidence=evidence,
        journal_path=journal_path,
        base_dir=Path(manifest_path).parent,
    )
    app = create_review_app(store, ui_dir=ui_dir)
    logger.info("review service on http://%s:%d (journal: %s)", host, port, journal_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("mock-services")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=9000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noop-rate", type=float, default=0.0, show_default=True)
@click.option("--erase-rate", type=float, default=0.0, show_default=True)
@click.option("--fixtures", "fixtures_path", type=click.Path(exists=True, dir_okay=False), help="Scripted detector answers per prompt.")
@handles_errors
def mock_services(
    host: str, port: int, seed: int, noop_rate: float, erase_rate: float, fixtures_path: Optional[str]
) -> None:
    """Serve mock inpainting and detection services over HTTP."""
    import uvicorn

    from .server.mock_app import create_mock_app, load_fixtures

    fixtures = load_fixtures(fixtures_path) if fixtures_path else None
    app = create_mock_app(seed=seed, noop_rate=noop_rate, erase_rate=erase_rate, fixtures=fixtures)
    logger.info("mock services on http://%s:%d", host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--drop-class", "drop_classes", multiple=True)
@handles_errors
def validate(manifest_path: str, drop_classes: tuple[str, ...]) -> None:
    """Load and validate a manifest; exit 1 on any violation."""
    manifest = load_manifest(manifest_path, drop_classes=drop_classes)
    _emit(
        {
            "valid": True,
            "images": len(manifest.images),
            "annotations": len(manifest.annotations),
            "categories": list(manifest.registry.all_classes()),
            "variant": manifest.variant,
        }
    )


if __name__ == "__main__":
    main()
