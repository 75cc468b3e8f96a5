"""``bearingtrack`` command line: synth, map and rtdt subcommands.

A run is described by one JSON document (``--config``); command-line flags
override its values. Every run writes ``<run_id>_manifest.json`` holding the
resolved config and a digest of the input so it can be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import timedelta
from pathlib import Path

from . import __version__
from .embed import TsneConfig, mds_embed, tsne_embed, write_embedding_csv
from .errors import BearingTrackError, ConfigError
from .ingest import (IMS_SAMPLE_RATE, SynthConfig, load_ims_directory, synth_run_to_failure,
                     write_recording_set)
from .preprocess import PreprocessConfig, preprocess_set, write_spectra_csv
from .render import MapFigureSpec, render_map, render_rho_curve
from .rtdt import AlertState, build_reference_map, track_stream, write_rho_csv, write_tracked_csv
from .similarity import distance_matrix

log = logging.getLogger("bearingtrack")

DEFAULTS = {
    "input": None,
    "synth": None,
    "channel": 0,
    "sample_rate": None,
    "preprocess": {},
    "method": "mds",
    "tsne": {},
    "reference_count": None,
    "reference_hours": 48.0,
    "m_window": 12,
    "threshold": 2.0,
    "out": "out",
    "seed": None,
    "run_id": "run",
}


class StageError(BearingTrackError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class _stage:
    """Context manager tagging any library error with the pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, (BearingTrackError, ValueError)) \
                and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    overrides = {
        "input": args.input, "out": args.out, "method": getattr(args, "method", None),
        "reference_count": getattr(args, "reference_count", None),
        "m_window": getattr(args, "m_window", None), "threshold": getattr(args, "threshold", None),
        "seed": args.seed, "channel": getattr(args, "channel", None), "run_id": args.run_id,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    if args.seed is not None and cfg["synth"] is not None:
        cfg["synth"] = dict(cfg["synth"], seed=args.seed)
    if getattr(args, "perplexity", None) is not None:
        cfg["tsne"] = dict(cfg["tsne"] or {}, perplexity=args.perplexity)
    return cfg


def _synth_config(cfg) -> SynthConfig:
    spec = dict(cfg["synth"] or {})
    if cfg["seed"] is not None:
        spec.setdefault("seed", cfg["seed"])
    return SynthConfig.from_dict(spec)


def _digest_dir(path: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(path.iterdir()):
        if p.is_file():
            h.update(p.name.encode() + b"\0")
            h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def load_input(cfg):
    """Return (RecordingSet, input digest) for a dataset directory or a synth spec."""
    src = cfg["input"]
    if src is not None and cfg["synth"] is not None:
        raise ConfigError("config names both an input path and a synth spec")
    if src is None and cfg["synth"] is None:
        raise ConfigError("no input: give --input or a 'synth' section")
    if src is not None and Path(src).suffix == ".json":
        cfg["synth"] = json.loads(Path(src).read_text())
        cfg["input"] = src = None
    if src is None:
        sc = _synth_config(cfg)
        digest = hashlib.sha256(json.dumps(sc.to_dict(), sort_keys=True).encode()).hexdigest()
        return synth_run_to_failure(sc), digest
    path = Path(src)
    if not path.is_dir():
        raise ConfigError(f"input {path} does not exist or is not a directory")
    rate = cfg["sample_rate"]
    side = path / "manifest.json"
    if rate is None and side.is_file():
        rate = json.loads(side.read_text()).get("config", {}).get("sample_rate")
    rs = load_ims_directory(path, sample_rate=rate or IMS_SAMPLE_RATE,
                            workers=min(8, os.cpu_count() or 1))
    if len(rs) == 0:
        raise ConfigError(f"no timestamp-named files in {path}")
    return rs, _digest_dir(path)


def preprocess_config(cfg, n_samples: int) -> PreprocessConfig:
    """Explicit config values win; otherwise derive from the recording length."""
    pc = dict(cfg["preprocess"] or {})
    seg = pc.setdefault("segment_len", n_samples)
    pc.setdefault("transform_len", 1 << max(1, (seg - 1).bit_length()))
    pc.setdefault("smoothing_block", min(128, pc["transform_len"] // 2))
    return PreprocessConfig(**pc)


def _reference_count(cfg, vectors) -> int:
    if cfg["reference_count"] is not None:
        n = int(cfg["reference_count"])
    else:
        t0 = vectors[0].timestamp
        limit = t0 + timedelta(hours=float(cfg["reference_hours"]))
        n = sum(1 for v in vectors if v.timestamp < limit)
    if n >= len(vectors):
        raise ConfigError(f"reference window ({n}) must be shorter than the dataset ({len(vectors)})")
    if n < 3:
        raise ConfigError(f"reference window needs at least 3 recordings, got {n}")
    return n


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _manifest(cfg, command, digest, artifacts, **extra):
    return {"command": command, "version": __version__, "config": cfg,
            "input_digest": digest, "artifacts": sorted(artifacts), **extra}


def _spectra(cfg, rs):
    with _stage("preprocess"):
        pc = preprocess_config(cfg, rs[0].n_samples)
        return pc, preprocess_set(rs, int(cfg["channel"]), pc)


def cmd_synth(cfg) -> int:
    out = Path(cfg["out"])
    with _stage("synth"):
        if cfg["input"] is not None:
            cfg["synth"] = json.loads(Path(cfg["input"]).read_text())
            if cfg["seed"] is not None:
                cfg["synth"]["seed"] = cfg["seed"]
        sc = _synth_config(cfg)
        rs = synth_run_to_failure(sc)
    with _stage("write"):
        write_recording_set(rs, out)
    log.info("wrote %d recordings to %s", len(rs), out)
    return 0


def cmd_map(cfg) -> int:
    out = Path(cfg["out"])
    rid = cfg["run_id"]
    with _stage("ingest"):
        rs, digest = load_input(cfg)
    pc, vectors = _spectra(cfg, rs)
    cfg["preprocess"] = asdict(pc)
    with _stage("similarity"):
        dm = distance_matrix(vectors)
    with _stage("embed"):
        if cfg["method"] == "mds":
            emb = mds_embed(dm)
        elif cfg["method"] == "tsne":
            tc = dict(cfg["tsne"] or {})
            tc.setdefault("seed", cfg["seed"] or 0)
            emb = tsne_embed(dm, TsneConfig(**tc))
        else:
            raise ConfigError(f"unknown method {cfg['method']!r}")
    with _stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        ts = [v.timestamp for v in vectors]
        arts = [f"{rid}_spectra.csv", f"{rid}_embedding.csv", f"{rid}_embedding.json", f"{rid}_map.svg"]
        write_spectra_csv(vectors, out / arts[0])
        write_embedding_csv(emb, out / arts[1], ts)
        spec = MapFigureSpec([(x, y, t) for (x, y), t in zip(emb.points, ts)], trajectory=True,
                             title=f"{rid}: {len(vectors)} spectra ({emb.method})")
        (out / arts[3]).write_text(render_map(spec))
        _write_json(out / f"{rid}_manifest.json", _manifest(cfg, "map", digest, arts, n_points=len(emb)))
    log.info("embedded %d points with %s", len(emb), emb.method)
    return 0


def cmd_rtdt(cfg) -> int:
    out = Path(cfg["out"])
    rid = cfg["run_id"]
    with _stage("ingest"):
        rs, digest = load_input(cfg)
    pc, vectors = _spectra(cfg, rs)
    cfg["preprocess"] = asdict(pc)
    with _stage("reference"):
        n_ref = _reference_count(cfg, vectors)
        ref, test = vectors[:n_ref], vectors[n_ref:]
        rmap = build_reference_map(ref)
    with _stage("track"):
        state = AlertState(int(cfg["m_window"]), float(cfg["threshold"]))
        points, state = track_stream(rmap, test, state)
    with _stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        arts = [f"{rid}_tracked.csv", f"{rid}_rho.csv", f"{rid}_reference.csv",
                f"{rid}_map.svg", f"{rid}_rho.svg"]
        write_tracked_csv(points, out / arts[0])
        write_rho_csv(state.rho_avg_history, out / arts[1])
        _write_reference_csv(rmap, out / arts[2])
        n = rmap.n_refs
        pts = [(x, y, v.timestamp) for (x, y), v in zip(rmap.ref_coords, ref)]
        pts += [(p.x2d[0], p.x2d[1], p.timestamp) for p in points]
        alert_idx = [n + i for i, p in enumerate(points)
                     if state.alerts and p.timestamp == state.alerts[0].timestamp]
        spec = MapFigureSpec(pts, highlight=tuple(range(n)), trajectory=False,
                             annotations=[(i, "alert") for i in alert_idx], origin=tuple(rmap.o2d),
                             title=f"{rid}: reference map + {len(points)} tracked")
        (out / arts[3]).write_text(render_map(spec))
        if state.rho_avg_history:
            (out / arts[4]).write_text(render_rho_curve(state.rho_avg_history, state.threshold,
                                                        state.alerts, title=f"{rid}: rho_avg"))
        else:
            arts.remove(arts[4])
        alerts = [{"timestamp": a.timestamp.isoformat() if a.timestamp else None,
                   "rho_avg": a.rho_avg, "index": _index_of(vectors, a.timestamp)}
                  for a in state.alerts]
        window = {"count": n_ref, "first": ref[0].timestamp, "last": ref[-1].timestamp}
        _write_json(out / f"{rid}_manifest.json",
                    _manifest(cfg, "rtdt", digest, arts, reference_window=window,
                              n_tracked=len(points), alerts=alerts))
    for a in alerts:
        log.warning("ALERT at %s (rho_avg=%.3f)", a["timestamp"], a["rho_avg"])
    return 0


def _index_of(vectors, ts):
    for i, v in enumerate(vectors):
        if v.timestamp == ts:
            return i
    return None


def _write_reference_csv(rmap, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "timestamp", "x", "y", "kind"])
        for i, ((x, y), v) in enumerate(zip(rmap.ref_coords, rmap.ref_vectors)):
            w.writerow([i, v.timestamp.isoformat() if v.timestamp else "", repr(float(x)),
                        repr(float(y)), "reference"])
        w.writerow([rmap.n_refs, "", repr(float(rmap.o2d[0])), repr(float(rmap.o2d[1])), "zero"])


COMMANDS = {"synth": cmd_synth, "map": cmd_map, "rtdt": cmd_rtdt}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bearingtrack", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--input", help="IMS dataset directory or synth JSON spec")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--run-id", dest="run_id")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("synth", help="write a synthetic run-to-failure dataset"))
    for name, text in (("map", "offline 2D map of a whole campaign"),
                       ("rtdt", "reference map + real-time tracking with alerts")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--channel", type=int)
        if name == "map":
            p.add_argument("--method", choices=["mds", "tsne"])
            p.add_argument("--perplexity", type=float)
        else:
            p.add_argument("--reference-count", dest="reference_count", type=int)
            p.add_argument("--m-window", dest="m_window", type=int)
            p.add_argument("--threshold", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (BearingTrackError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
