"""Command-line harness.

    momct simulate <config> --out DIR [--seed S]
    momct fuse --in FILE|- --out DIR [--origin LAT,LON] [--override k=v ...]
    momct run <config> --out DIR [--seed S] [--override k=v ...]
    momct metrics --truth FILE --events FILE

Override keys are dotted: ``filter.n_particles=2000``,
``association.gate_radius=5``, ``fusion.watermark_delay=1``,
``metrics.burn_in=2``, ``scenario.channel.loss_prob=0``,
``scenario.cameras.0.p_detect=1``.

Exit status: 0 success, 1 configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .association import AssociationConfig
from .fusion import CollisionAlert, FusionConfig, FusionEngine, TrackEvent, finish, process_message, stats_line
from .geo import GeoPoint, ReferenceOrigin
from .metrics import MetricsReport, report_from_files
from .model import TrackletMessage
from .particle_filter import FilterConfig
from .simulator import ConfigError, ScenarioConfig, run_scenario, rng_streams, scenario_from_dict, scenario_to_dict
from .transport import FileTransport, write_messages

log = logging.getLogger("momct")

TRUTH_FILE = "truth.jsonl"
MESSAGES_FILE = "messages.jsonl"
PROVENANCE_FILE = "provenance.jsonl"
EVENTS_FILE = "events.jsonl"
METRICS_FILE = "metrics.json"
RUN_INFO_FILE = "run_info.json"

_SECTIONS = {"filter", "association", "fusion", "metrics", "scenario"}


@dataclass
class Settings:
    filter: FilterConfig = field(default_factory=FilterConfig)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    burn_in: float = 1.0


def parse_overrides(items: Iterable[str]) -> dict[str, dict]:
    """``["filter.n_particles=2000"]`` -> ``{"filter": {"n_particles": 2000}}``."""
    out: dict[str, dict] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        section, dot, rest = key.strip().partition(".")
        if not sep or not dot or not rest or section not in _SECTIONS:
            raise ConfigError(f"bad override {item!r}; expected <section>.<key>=<value>, section in {sorted(_SECTIONS)}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.setdefault(section, {})[rest] = value
    return out


def build_settings(overrides: dict[str, dict]) -> Settings:
    metrics = dict(overrides.get("metrics", {}))
    try:
        burn_in = float(metrics.pop("burn_in", 1.0))
        if metrics:
            raise ConfigError(f"unknown metrics keys: {sorted(metrics)}")
        return Settings(
            filter=FilterConfig(**overrides.get("filter", {})),
            association=AssociationConfig(**overrides.get("association", {})),
            fusion=FusionConfig(**overrides.get("fusion", {})),
            burn_in=burn_in,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def apply_scenario_overrides(raw: dict, overrides: dict) -> dict:
    raw = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        node = raw
        parts = dotted.split(".")
        try:
            for p in parts[:-1]:
                node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
            if isinstance(node, list):
                node[int(parts[-1])] = value
            else:
                node[parts[-1]] = value
        except (ValueError, IndexError, TypeError, AttributeError):
            raise ConfigError(f"cannot apply override scenario.{dotted}") from None
    return raw


def load_config(path: str | Path, scenario_overrides: dict, seed: int | None) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    raw = apply_scenario_overrides(raw, scenario_overrides)
    if seed is not None:
        raw["seed"] = seed
    return scenario_from_dict(raw)


def fuse_messages(messages: Iterable[TrackletMessage], engine: FusionEngine) -> list[TrackEvent | CollisionAlert]:
    """Feed messages in arrival order, draining after each; flush at the end."""
    events: list[TrackEvent | CollisionAlert] = []
    for msg in messages:
        events.extend(process_message(engine, msg))
    events.extend(finish(engine))
    return events


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def simulate(cfg: ScenarioConfig, out_dir: str | Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_scenario(cfg)
    _write_lines(out / TRUTH_FILE, (s.to_line() for s in result.truth))
    write_messages(out / MESSAGES_FILE, result.messages)
    _write_lines(
        out / PROVENANCE_FILE,
        (
            json.dumps({"msg": i, "object_id": oid, "delivered_at": dt}, separators=(",", ":")) + "\n"
            for i, (oid, dt) in enumerate(zip(result.provenance, result.delivery_times))
        ),
    )
    return result


def run_e2e(cfg: ScenarioConfig, out_dir: str | Path, settings: Settings | None = None) -> MetricsReport:
    """Simulate, fuse, and score one scenario; every artifact lands in ``out_dir``."""
    settings = settings or Settings()
    start = time.perf_counter()
    out = Path(out_dir)
    result = simulate(cfg, out)

    engine = FusionEngine(cfg.origin, settings.filter, settings.association, settings.fusion, rng_streams(cfg.seed)[2])
    events = fuse_messages(result.messages, engine)
    _write_lines(
        out / EVENTS_FILE,
        [e.to_line() for e in events] + [stats_line(engine.stats, result.sent, len(result.messages))],
    )

    report = report_from_files(
        out / TRUTH_FILE,
        out / EVENTS_FILE,
        burn_in=settings.burn_in,
        collision_distance=settings.fusion.collision_distance,
        horizon=settings.fusion.prediction_horizon,
    )
    _write_lines(out / METRICS_FILE, [report.to_line()])
    report.runtime_s = time.perf_counter() - start
    _write_lines(out / RUN_INFO_FILE, [json.dumps({"runtime_s": report.runtime_s}) + "\n"])
    log.info("run finished in %.2fs: overall RMSE %s, %d tracks", report.runtime_s, report.overall_rmse, report.n_tracks)
    return report


def _parse_origin(text: str) -> ReferenceOrigin:
    try:
        lat, lon = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--origin expects LAT,LON, got {text!r}") from None
    g = GeoPoint(lat, lon)
    if not g.is_valid:
        raise ConfigError("; ".join(g.problems()))
    return ReferenceOrigin(g)


def _cmd_simulate(args) -> int:
    overrides = parse_overrides(args.override)
    cfg = load_config(args.config, overrides.get("scenario", {}), args.seed)
    result = simulate(cfg, args.out)
    (Path(args.out) / "scenario.json").write_text(json.dumps(scenario_to_dict(cfg), indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"truth": len(result.truth), "sent": result.sent, "delivered": len(result.messages)}))
    return 0


def _cmd_fuse(args) -> int:
    overrides = parse_overrides(args.override)
    settings = build_settings(overrides)
    origin = _parse_origin(args.origin) if args.origin else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    transport = FileTransport(args.input)
    engine = FusionEngine(origin, settings.filter, settings.association, settings.fusion, rng_streams(args.seed)[2])
    events = fuse_messages(transport, engine)
    _write_lines(out / EVENTS_FILE, [e.to_line() for e in events] + [stats_line(engine.stats)])
    print(json.dumps({"events": len(events), "rejected": transport.rejected, **vars(engine.stats)}))
    return 0


def _cmd_run(args) -> int:
    overrides = parse_overrides(args.override)
    settings = build_settings(overrides)
    cfg = load_config(args.config, overrides.get("scenario", {}), args.seed)
    report = run_e2e(cfg, args.out, settings)
    sys.stdout.write(report.to_line())
    return 0


def _cmd_metrics(args) -> int:
    report = report_from_files(
        args.truth, args.events, burn_in=args.burn_in,
        collision_distance=args.collision_distance, horizon=args.horizon,
    )
    if args.out:
        _write_lines(Path(args.out), [report.to_line()])
    sys.stdout.write(report.to_line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momct", description="Multi-camera tracklet fusion harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate truth and delivered messages only")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fuse", help="replay a message file through the fusion engine")
    p.add_argument("--in", dest="input", required=True, help="message file, or - for stdin")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--origin", help="reference LAT,LON (default: first point seen)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("run", help="simulate, fuse and score end to end")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("metrics", help="recompute metrics from recorded files")
    p.add_argument("--truth", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--burn-in", type=float, default=1.0)
    p.add_argument("--collision-distance", type=float, default=2.5)
    p.add_argument("--horizon", type=float, default=3.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 2
    except (ValueError, KeyError) as exc:
        # malformed truth/event data files
        log.error("unreadable input: %r", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
