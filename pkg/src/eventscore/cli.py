"""Command-line entry point: ``eventscore <command> ...``.

Exit codes: 0 success, 1 fatal error, 2 finished with per-item failures
(listed in ``errors.jsonl`` in the output directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evalharness as eh
from .ahq import TrainingError, accuracy, ahq_train, load_ahq_model, read_ahq_labels, save_ahq_model
from .audio_io import AudioFormatError, load_wav
from .event_text import CaptionError, decompose_caption, make_distractor_caption, reverse_caption
from .providers import ProviderConfig, make_provider
from .scoring import ScoreConfig, ScoringError, axis_scorer, score_events_sweep

log = logging.getLogger("eventscore")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class FatalError(RuntimeError):
    pass


@dataclass
class RunConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    volume_threshold: float = 0.3
    overlap_threshold: float = 0.85
    simultaneity_tol_s: float = 0.5
    ahq_model_path: Path | None = None
    parallelism: int = 1
    rng_seed: int = 0
    output_dir: Path = Path("out")

    def __post_init__(self):
        if not 0.0 < self.volume_threshold < 1.0:
            raise ValueError("volume threshold must lie in (0, 1)")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def score_config(self, threshold: float | None = None, eos_aggregate: str = "min") -> ScoreConfig:
        return ScoreConfig(
            threshold=self.volume_threshold if threshold is None else threshold,
            simultaneity_tol_s=self.simultaneity_tol_s,
            eos_aggregate=eos_aggregate,
        )


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < JSON config file < command-line flags."""
    file_cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    prov = dict(file_cfg.get("provider", {}))
    thresholds = dict(file_cfg.get("thresholds", {}))

    def flag(name, fallback):
        value = getattr(args, name, None)
        return fallback if value is None else value

    prov["kind"] = flag("provider", prov.get("kind", "stub"))
    prov["endpoint_url"] = flag("endpoint", prov.get("endpoint_url"))
    prov["cache_dir"] = flag("cache", prov.get("cache_dir"))
    prov["max_in_flight"] = flag("parallelism", prov.get("max_in_flight", file_cfg.get("parallelism", 4)))
    ahq_path = flag("ahq_model", file_cfg.get("ahq_model_path"))
    return RunConfig(
        provider=ProviderConfig(**prov),
        volume_threshold=flag("threshold", thresholds.get("volume", 0.3)),
        overlap_threshold=thresholds.get("overlap", 0.85),
        simultaneity_tol_s=thresholds.get("simultaneity_tol_s", 0.5),
        ahq_model_path=Path(ahq_path) if ahq_path else None,
        parallelism=flag("parallelism", file_cfg.get("parallelism", 1)),
        rng_seed=flag("seed", file_cfg.get("rng_seed", 0)),
        output_dir=Path(flag("out", file_cfg.get("output_dir", "out"))),
    )


def _out_dir(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _resolve(base: Path, audio_path: str) -> Path:
    p = Path(audio_path)
    return p if p.is_absolute() else base / p


def _load_rows(path: str, reader=ds.read_jsonl) -> list[dict]:
    try:
        return reader(path)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read {path}: {exc}") from exc


def _check_audio(rows: list[dict], base: Path) -> None:
    missing = [str(_resolve(base, r["audio_path"])) for r in rows if not _resolve(base, r["audio_path"]).is_file()]
    if missing:
        raise FatalError("missing audio files:\n  " + "\n  ".join(missing))


def _load_model(cfg: RunConfig):
    if cfg.ahq_model_path is None:
        return None
    try:
        return load_ahq_model(cfg.ahq_model_path)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot load AHQ model {cfg.ahq_model_path}: {exc}") from exc


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def parse_sweep(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# -- commands ----------------------------------------------------------------------------


def cmd_score(args, cfg: RunConfig) -> int:
    rows = _load_rows(args.manifest, ds.read_manifest)
    base = Path(args.manifest).parent
    _check_audio(rows, base)
    model = _load_model(cfg)
    thresholds = parse_sweep(args.sweep) if args.sweep else [cfg.volume_threshold]
    configs = [cfg.score_config(t, args.eos_aggregate) for t in thresholds]
    providers = make_provider(cfg.provider)

    def work(row):
        try:
            clip = load_wav(_resolve(base, row["audio_path"]), clip_id=row["audio_id"])
            try:
                events = providers.decompose(row["caption"])
            except Exception as exc:
                raise ScoringError("decompose", exc) from exc
            return score_events_sweep(clip, events, providers, model, configs), None
        except (ScoringError, AudioFormatError) as exc:
            err = {"audio_id": row["audio_id"], "stage": getattr(exc, "stage", "load"), "error": str(exc)}
            if getattr(exc, "event_index", None) is not None:
                err["event_index"] = exc.event_index
            return None, err

    try:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(work, rows))
    finally:
        providers.close()

    out = _out_dir(cfg)
    errors = [err for _, err in results if err]
    sweep = len(thresholds) > 1
    summaries = []
    for t_idx, threshold in enumerate(thresholds):
        lines = [ds.score_row(row, recs[t_idx]) for row, (recs, _) in zip(rows, results) if recs]
        suffix = f"_t{threshold:g}" if sweep else ""
        ds.write_jsonl(out / f"scores{suffix}.jsonl", lines)
        ess_values = [ln["ess"] for ln in lines if ln["ess"] is not None]
        summary = {
            "threshold": threshold,
            "count": len(lines),
            "failures": len(errors),
            "eos_mean": _mean(ln["eos"] for ln in lines),
            "ess_mean": _mean(ess_values),
            "ess_applicable": len(ess_values),
            "ahq_mean": _mean(ln["ahq"] for ln in lines),
        }
        _write_json(out / f"summary{suffix}.json", summary)
        summaries.append(summary)
    if sweep:
        _write_json(out / "sweep_summary.json", summaries)
    for s in summaries:
        ess = "n/a" if s["ess_mean"] is None else f"{100 * s['ess_mean']:.2f}"
        eos = "n/a" if s["eos_mean"] is None else f"{100 * s['eos_mean']:.2f}"
        ahq = "n/a" if s["ahq_mean"] is None else f"{s['ahq_mean']:.3f}"
        print(f"threshold {s['threshold']:g}: count {s['count']}  EOS {eos}  ESS {ess} ({s['ess_applicable']})  AHQ {ahq}")
    (out / "errors.jsonl").unlink(missing_ok=True)
    if errors:
        ds.write_jsonl(out / "errors.jsonl", errors)
        print(f"{len(errors)} item(s) failed; see {out / 'errors.jsonl'}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_train_ahq(args, cfg: RunConfig) -> int:
    try:
        labels, dropped = read_ahq_labels(args.labels)
    except (OSError, ValueError) as exc:
        raise FatalError(f"cannot read labels {args.labels}: {exc}") from exc
    for audio_id in dropped:
        print(f"dropped {audio_id}: no majority label")
    rows = {r["audio_id"]: r for r in _load_rows(args.manifest, ds.read_manifest)}
    unknown = sorted(set(labels) - set(rows))
    if unknown:
        raise FatalError(f"labelled audio ids absent from the manifest: {unknown}")
    ids = sorted(labels)
    if len({labels[i] for i in ids}) < 2:
        raise FatalError("training set needs at least two distinct labels after majority filtering")
    base = Path(args.manifest).parent
    _check_audio([rows[i] for i in ids], base)

    providers = make_provider(cfg.provider)
    try:
        clips = [load_wav(_resolve(base, rows[i]["audio_path"]), clip_id=i) for i in ids]
        vectors = providers.embed_audio(clips)
    finally:
        providers.close()
    data = [(v, labels[i]) for v, i in zip(vectors, ids)]
    try:
        model, trace = ahq_train(data, epochs=args.epochs, lr=args.lr, batch=args.batch, rng_seed=cfg.rng_seed, hidden=args.hidden)
    except TrainingError as exc:
        raise FatalError(str(exc)) from exc
    acc = accuracy(model, data)
    out = _out_dir(cfg)
    save_ahq_model(out / "ahq_model.bin", model)
    _write_json(out / "ahq_loss.json", {"loss": trace, "train_accuracy": acc, "count": len(data), "dropped": dropped})
    print(f"train accuracy {100 * acc:.2f}% on {len(data)} samples ({len(dropped)} dropped)")
    return EXIT_OK


def _pools(path: str) -> list[ds.Pool]:
    try:
        return ds.pools_from_scores(_load_rows(path))
    except (KeyError, ValueError) as exc:
        raise FatalError(f"invalid score file {path}: {exc}") from exc


def cmd_rank(args, cfg: RunConfig) -> int:
    lines = []
    for pool in _pools(args.scores):
        if len(pool) < 2:
            log.warning("caption %s has a single audio; not ranked", pool.caption_id)
            continue
        combined = dict(zip((e.audio_id for e in pool.entries), ds.combined_scores(pool, args.method)))
        for audio_id, rank in ds.rank_pool(pool, args.method):
            lines.append({
                "caption_id": pool.caption_id,
                "caption": pool.caption,
                "audio_id": audio_id,
                "rank": rank,
                "combined": float(combined[audio_id]),
            })
    ds.write_jsonl(_out_dir(cfg) / "ranking.jsonl", lines)
    print(f"ranked {len(lines)} audio(s)")
    return EXIT_OK


def cmd_pairs(args, cfg: RunConfig) -> int:
    pairs = []
    for pool in _pools(args.scores):
        if len(pool) < 2:
            continue
        pairs.extend(ds.emit_pairs(pool, ds.rank_pool(pool, args.method), args.policy))
    ds.write_jsonl(_out_dir(cfg) / "pairs.jsonl", [p.to_json() for p in pairs])
    print(f"wrote {len(pairs)} preference pair(s)")
    return EXIT_OK


def _eval_items(args, cfg: RunConfig, key: str):
    rows = _load_rows(args.items)
    base = Path(args.items).parent
    _check_audio(rows, base)
    candidates: list[str] = []
    if key == "distractor":
        for r in rows:
            candidates.extend(decompose_caption(r["caption"]).events)
    items = []
    for k, r in enumerate(rows):
        other = r.get(key)
        if not other:
            events = decompose_caption(r["caption"])
            try:
                if key == "distractor":
                    other = make_distractor_caption(events, candidates, cfg.rng_seed + k)
                else:
                    other = reverse_caption(events)
            except CaptionError as exc:
                raise FatalError(f"item {k}: cannot build {key} caption: {exc}") from exc
        clip = load_wav(_resolve(base, r["audio_path"]), clip_id=r.get("audio_id") or Path(r["audio_path"]).stem)
        items.append((clip, r["caption"], other))
    return rows, items


def _emit(report: eh.EvalReport, cfg: RunConfig, stem: str) -> int:
    path = eh.write_report(report, _out_dir(cfg), stem)
    print(report.table())
    print(f"report: {path}")
    return EXIT_PARTIAL if report.excluded else EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    task = args.task
    if task == "segment-f1":
        ref = eh.read_timelines(args.ref)
        pred = eh.read_timelines(args.pred)
        return _emit(eh.segment_f1(ref, pred, args.segment_len), cfg, "segment_f1")

    providers = make_provider(cfg.provider)
    try:
        score_cfg = cfg.score_config()
        if task == "missing-event":
            _, items = _eval_items(args, cfg, "distractor")
            scorer = axis_scorer(providers, args.axis or "eos", score_cfg, _load_model(cfg))
            return _emit(eh.missing_event_accuracy(items, scorer), cfg, "missing_event")
        if task == "sequence":
            _, items = _eval_items(args, cfg, "reversed")
            scorer = axis_scorer(providers, args.axis or "ess", score_cfg, _load_model(cfg))
            try:
                report = eh.sequence_accuracy(items, scorer, providers.decompose)
            except ValueError as exc:
                raise FatalError(str(exc)) from exc
            return _emit(report, cfg, "sequence")
        # correlation with human labels
        rows = _load_rows(args.items)
        base = Path(args.items).parent
        rows = [r for r in rows if r.get("human_label") is not None]
        _check_audio(rows, base)
        scorer = axis_scorer(providers, args.axis or "ess", score_cfg, _load_model(cfg))
        xs, ys = [], []
        for r in rows:
            clip = load_wav(_resolve(base, r["audio_path"]))
            value = scorer(clip, r["caption"])
            if value is not None:
                xs.append(value)
                ys.append(float(r["human_label"]))
        try:
            report = eh.correlation_report(xs, ys, f"correlation_{args.axis or 'ess'}")
        except ValueError as exc:
            raise FatalError(str(exc)) from exc
        return _emit(report, cfg, "correlation")
    finally:
        providers.close()


def _per_caption(rows: list[dict], axis: str) -> dict[str, float]:
    grouped: dict[str, list[float]] = {}
    for r in rows:
        if r.get(axis) is not None:
            grouped.setdefault(r["caption_id"], []).append(float(r[axis]))
    return {cid: float(np.mean(v)) for cid, v in grouped.items()}


def cmd_bench(args, cfg: RunConfig) -> int:
    a_rows, b_rows = _load_rows(args.scores_a), _load_rows(args.scores_b)
    allowed = None
    if args.captions:
        allowed = {str(r["caption_id"]) for r in _load_rows(args.captions)}
    result = {}
    for axis in ("eos", "ess", "ahq"):
        a, b = _per_caption(a_rows, axis), _per_caption(b_rows, axis)
        shared = sorted(set(a) & set(b))
        if allowed is not None:
            shared = [c for c in shared if c in allowed]
        if not shared:
            result[axis] = None
            continue
        report = eh.win_rate([a[c] for c in shared], [b[c] for c in shared], f"win_{axis}")
        result[axis] = report.to_json() | {"value": report.value}
        print(report.table())
    if all(v is None for v in result.values()):
        raise FatalError("the two score files share no caption_id")
    _write_json(_out_dir(cfg) / "bench.json", result)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--parallelism", type=int, default=S)
    p.add_argument("--provider", choices=["remote", "stub"], default=S)
    p.add_argument("--endpoint", default=S, help="base URL of a remote model server")
    p.add_argument("--cache", default=S, help="embedding cache directory")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--threshold", type=float, default=S, help="volume threshold for onset detection")
    p.add_argument("--sweep", default=S, help="comma-separated volume thresholds, e.g. 0.1,0.3,0.5")
    p.add_argument("--ahq-model", dest="ahq_model", default=S)
    p.add_argument("-v", "--verbose", action="store_true", default=S)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="eventscore", parents=[common], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score a manifest of (audio, caption) pairs")
    p.add_argument("manifest")
    p.add_argument("--eos-aggregate", choices=["min", "mean"], default="min")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("train-ahq", parents=[common], help="train the quality predictor")
    p.add_argument("labels")
    p.add_argument("manifest")
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--lr", type=float, default=10 ** -2.5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64)
    p.set_defaults(func=cmd_train_ahq)

    for name, func in (("rank", cmd_rank), ("pairs", cmd_pairs)):
        p = sub.add_parser(name, parents=[common], help=f"{name} pools from a score file")
        p.add_argument("scores")
        p.add_argument("--method", choices=[ds.MEAN_RANK, ds.MEAN_SCORE], default=ds.MEAN_RANK)
        if name == "pairs":
            p.add_argument("--policy", choices=[x.value for x in ds.PairPolicy], default="BEST_WORST")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[common], help="evaluation protocols")
    p.add_argument("task", choices=["missing-event", "sequence", "segment-f1", "correlation"])
    p.add_argument("items", nargs="?", help="evaluation item JSONL")
    p.add_argument("--ref", help="reference timelines (segment-f1)")
    p.add_argument("--pred", help="predicted timelines (segment-f1)")
    p.add_argument("--segment-len", type=float, default=1.0)
    p.add_argument("--axis", choices=["eos", "ess", "ahq"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="win rates of score file A over score file B")
    p.add_argument("scores_a")
    p.add_argument("scores_b")
    p.add_argument("--captions", help="JSONL of {caption_id, caption} restricting the comparison")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "parallelism", "provider", "endpoint", "cache", "out", "threshold", "sweep", "ahq_model"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    if args.command == "eval":
        if args.task == "segment-f1" and not (args.ref and args.pred):
            parser.error("eval segment-f1 needs --ref and --pred")
        if args.task != "segment-f1" and not args.items:
            parser.error(f"eval {args.task} needs an items file")
    try:
        cfg = build_run_config(args)
        return args.func(args, cfg)
    except (FatalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
