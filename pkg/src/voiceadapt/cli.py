"""Command-line interface.  Every result is one JSON object per line on stdout;
errors go to stderr as JSON with exit code 2 (validation) or 3 (runtime)."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import arp, etv, nn
from .audio import FeatureConfig, estimate_t30, extract_log_mel, read_wav, resample
from .errors import StageError, ValidationError, VoiceAdaptError
from .phonetics import Lexicon, similarity
from .pipeline import Pipeline, format_table, ingest, load_config, run_evaluation
from .stats import ModelFormula, compare_links, fit_gamma_glm
from .types import EnvironmentContext, UserProfile

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", f"{self.prog}: {message}")
        sys.exit(EXIT_VALIDATION)


def _emit(record, out=None):
    out = out or sys.stdout
    out.write(json.dumps(record, default=_json_default) + "\n")
    out.flush()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _emit_error(kind, message, **extra):
    _emit({"error": kind, "message": message, **extra}, sys.stderr)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_features(args):
    fc = FeatureConfig()
    clip = read_wav(args.wav).mono()
    if clip.sample_rate_hz != fc.sample_rate_hz:
        clip = resample(clip, fc.sample_rate_hz)
    spec = extract_log_mel(clip, fc)
    if args.out:
        np.save(args.out, spec.values)
    _emit({"wav": str(args.wav), "frames": spec.n_frames, "n_mels": spec.values.shape[1],
           "frame_duration_s": spec.frame_duration_s, "mean_log_energy": float(spec.values.mean()),
           "out": str(args.out) if args.out else None})


def cmd_measure_t30(args):
    est = estimate_t30(read_wav(args.wav).mono())
    _emit({"wav": str(args.wav), "t30_s": est.t30_s,
           "per_band_t30": {str(int(k)): v for k, v in est.per_band_t30.items()},
           "decay_fit_r2": est.decay_fit_r2})


def cmd_arp_train(args):
    ds = arp.load_delta_manifest(args.manifest, args.audio_dir, args.split_file, args.seed)
    kw = {}
    if args.filters:
        kw["block_filter_counts"] = tuple(int(x) for x in args.filters.split(","))
    cfg = arp.ArpConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                        seed=args.seed, **kw)
    weights, metrics = arp.train_arp(ds, cfg, log=nn.JsonlLog(sys.stdout))
    nn.save_weights(weights, args.out)
    _emit({"weights": str(args.out), "test_mse": metrics.test_mse, "test_mae": metrics.test_mae,
           "n_train": len(ds.splits["train"]), "n_val": len(ds.splits["val"]),
           "n_test": len(ds.splits["test"]), "seconds": metrics.seconds})


def cmd_arp_predict(args):
    weights = arp.load_arp(args.weights)
    r = arp.predict_ar(weights, read_wav(args.wav))
    _emit({"wav": str(args.wav), "raw": r.raw, "clamped": r.value})


def cmd_etv_train(args):
    tuples = ingest("study-tuples", args.input)
    cfg = etv.EtvConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                        augment_copies=args.copies, noise_scale=args.noise_scale, seed=args.seed)
    weights, m = etv.train_etv(tuples, cfg, log=nn.JsonlLog(sys.stdout))
    nn.save_weights(weights, args.out)
    _emit({"weights": str(args.out), "train_mse": m.train_mse, "holdout_mse": m.holdout_mse,
           "n_train": m.n_train, "n_holdout": m.n_holdout, "units": "normalised"})


def cmd_etv_adapt(args):
    weights = etv.load_etv(args.weights)
    ctx = EnvironmentContext(args.ar, args.distance, args.t30)
    v = etv.adapt_voice(weights, ctx, UserProfile(args.hearing, args.cefr))
    _emit({**v.to_dict(), "extrapolated": ctx.extrapolated})


def cmd_score_word(args):
    lex = Lexicon.load(args.lexicon) if args.lexicon else None
    s = similarity(args.target, args.response, lex)
    _emit({"target": args.target, "response": args.response, "similarity": s.value, "cost": s.cost,
           "alignment": [list(p) for p in s.alignment], "breakdown": s.breakdown,
           "target_phonemes": list(s.target.phonemes), "response_phonemes": list(s.response.phonemes),
           "flagged": s.target.flagged or s.response.flagged})


def cmd_fit_glm(args):
    tuples = ingest("study-tuples", args.input)
    formula = ModelFormula(response=args.response, link=args.link, intercept=not args.no_intercept)
    if args.compare_links:
        cmp = compare_links(tuples, formula)
        for link, fit in cmp["fits"].items():
            if isinstance(fit, Exception):
                _emit({"response": args.response, "link": link, "error": str(fit)})
            else:
                _emit({"response": args.response, **fit.to_dict()})
        _emit({"response": args.response, "aic": cmp["aic"], "best_link": cmp["best"]})
    else:
        _emit({"response": args.response, **fit_gamma_glm(tuples, formula).to_dict()})


def cmd_adapt(args):
    cfg = load_config(args.config)
    pipe = Pipeline(cfg)
    user = UserProfile(
        args.hearing if args.hearing is not None else cfg.default_user.hearing_difficulty,
        args.cefr if args.cefr is not None else cfg.default_user.english_cefr,
    )
    t30 = args.t30
    if t30 is None and args.ir:
        t30 = estimate_t30(read_wav(args.ir).mono()).t30_s
    for wav in args.wav:
        try:
            clip = read_wav(wav)
        except VoiceAdaptError as exc:
            raise StageError("read", exc) from exc
        rep = pipe.adapt(clip, user, args.distance, t30, args.room, name=str(wav))
        _emit(rep.to_dict())


def cmd_evaluate(args):
    report = run_evaluation(ingest("study-tuples", args.fixed), ingest("study-tuples", args.adaptive),
                            args.threshold)
    for row in report["table"]:
        _emit({"record": "table", **row})
    for key, res in report["wilcoxon"].items():
        _emit({"record": "wilcoxon", "test": key, **res})
    if args.pretty:
        for line in format_table(report):
            sys.stderr.write(line + "\n")


def cmd_ingest(args):
    data = ingest(args.kind, args.path, args.audio_dir)
    if args.kind == "delta-manifest":
        summary = {"records": len(data.records), **{k: len(v) for k, v in data.splits.items()}}
    elif args.kind == "lexicon":
        summary = {"words": len(data), "pronunciations": sum(1 for _ in data.pronunciations())}
    else:
        summary = {"tuples": len(data), "subjects": len({t.subject_id for t in data})}
    _emit({"kind": args.kind, "path": str(args.path), "valid": True, **summary})


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="voiceadapt", description="Adaptive robot speech tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("features", help="log-mel spectrogram of a WAV file")
    s.add_argument("--wav", type=Path, required=True)
    s.add_argument("--out", type=Path, help="save the matrix as .npy")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("measure-t30", help="T30 from an impulse-response WAV")
    s.add_argument("--wav", type=Path, required=True)
    s.set_defaults(func=cmd_measure_t30)

    a = sub.add_parser("arp", help="annoyance-rating model").add_subparsers(dest="action", required=True,
                                                                           parser_class=_Parser)
    s = a.add_parser("train")
    s.add_argument("--manifest", type=Path, required=True)
    s.add_argument("--audio-dir", type=Path, required=True)
    s.add_argument("--split-file", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--lr", type=float, default=0.005)
    s.add_argument("--filters", help="six comma-separated filter counts")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_arp_train)
    s = a.add_parser("predict")
    s.add_argument("--weights", type=Path, required=True)
    s.add_argument("--wav", type=Path, required=True)
    s.set_defaults(func=cmd_arp_predict)

    e = sub.add_parser("etv", help="environment-to-voice model").add_subparsers(dest="action", required=True,
                                                                               parser_class=_Parser)
    s = e.add_parser("train")
    s.add_argument("--input", type=Path, required=True, help="study-tuple CSV")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--copies", type=int, default=4)
    s.add_argument("--noise-scale", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_etv_train)
    s = e.add_parser("adapt")
    s.add_argument("--weights", type=Path, required=True)
    s.add_argument("--ar", type=float, required=True)
    s.add_argument("--distance", type=float, required=True, help="cm")
    s.add_argument("--t30", type=float, required=True, help="seconds")
    s.add_argument("--cefr", type=int, required=True)
    s.add_argument("--hearing", type=int, required=True)
    s.set_defaults(func=cmd_etv_adapt)

    s = sub.add_parser("score-word", help="phonetic similarity of two words")
    s.add_argument("--target", required=True)
    s.add_argument("--response", required=True)
    s.add_argument("--lexicon", type=Path, help="pronouncing dictionary to use instead of the built-in one")
    s.set_defaults(func=cmd_score_word)

    s = sub.add_parser("fit-glm", help="gamma mixed model on study tuples")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--response", choices=("sp", "ux"), required=True)
    s.add_argument("--link", choices=("log", "inverse"), default="log")
    s.add_argument("--compare-links", action="store_true")
    s.add_argument("--no-intercept", action="store_true")
    s.set_defaults(func=cmd_fit_glm)

    s = sub.add_parser("adapt", help="ambient WAV -> voice parameters")
    s.add_argument("--config", type=Path, required=True)
    s.add_argument("--wav", type=Path, nargs="+", required=True)
    s.add_argument("--distance", type=float, default=200.0, help="cm")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--t30", type=float, help="seconds")
    g.add_argument("--room", help="room name from the config room table")
    g.add_argument("--ir", type=Path, help="impulse-response WAV to measure T30 from")
    s.add_argument("--cefr", type=int)
    s.add_argument("--hearing", type=int)
    s.set_defaults(func=cmd_adapt)

    s = sub.add_parser("evaluate", help="fixed vs adaptive voice comparison")
    s.add_argument("--fixed", type=Path, required=True)
    s.add_argument("--adaptive", type=Path, required=True)
    s.add_argument("--threshold", type=float, default=5.0)
    s.add_argument("--pretty", action="store_true", help="also print the table to stderr")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ingest", help="validate a dataset file")
    s.add_argument("--kind", choices=("delta-manifest", "study-tuples", "lexicon"), required=True)
    s.add_argument("--path", type=Path, required=True)
    s.add_argument("--audio-dir", type=Path)
    s.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        code = EXIT_VALIDATION if isinstance(exc.cause, ValidationError) else EXIT_RUNTIME
        _emit_error(type(exc.cause).__name__, str(exc), stage=exc.stage)
        return code
    except ValidationError as exc:
        extra = {"rows": [[ln, msg] for ln, msg in exc.errors]} if hasattr(exc, "errors") else {}
        _emit_error(type(exc).__name__, str(exc), **extra)
        return EXIT_VALIDATION
    except VoiceAdaptError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_VALIDATION
    except OSError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
