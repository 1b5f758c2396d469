"""``mdsc`` command line.

Exit codes: 0 success, 1 invalid input or usage, 2 numeric/runtime failure.
Every subcommand prints its fully resolved configuration as JSON before it
starts working.
"""

import argparse
import json
import sys
from pathlib import Path

from . import embedding_io, encoder_stub, gradcheck, metrics, synthgen, trainer
from .embedding_io import MOTION, EmbeddingDataset, StyleVocabulary, atomic_write_text
from .errors import MdscError, NumericError, UnsupportedMetricError, ValidationError
from .objectives import LossWeights

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bool(text):
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _k_list(text):
    try:
        ks = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None
    if not ks:
        raise argparse.ArgumentTypeError("empty k list")
    return ks


def build_parser():
    p = _Parser(prog="mdsc", description="Music-dance style consistency toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic paired embedding dataset")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--latent-dim", type=int, default=16)
    s.add_argument("--c-m", type=int, default=32)
    s.add_argument("--c-a", type=int, default=24)
    s.add_argument("--n-per-class", type=int, default=100)
    s.add_argument("--noise-sigma", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")

    a = sub.add_parser("pretrain-ae", help="train the motion autoencoder on pose windows")
    a.add_argument("--windows", required=True, help="JSONL of {id, values[, style]}")
    a.add_argument("--c-m", type=int, default=encoder_stub.DEFAULT_C_M)
    a.add_argument("--hidden", type=int, default=None)
    a.add_argument("--activation", choices=("relu", "linear"), default="relu")
    a.add_argument("--epochs", type=int, default=200)
    a.add_argument("--batch-size", type=int, default=32)
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True, help="autoencoder checkpoint (JSON)")
    a.add_argument("--loss-csv", default=None)
    a.add_argument("--embeddings-out", default=None, help="write encoded windows as a motion-only dataset")
    a.add_argument("--c-a", type=int, default=256, help="music dim recorded in that dataset's manifest")

    t = sub.add_parser("train", help="train alignment heads")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--trace", default=None, help="loss trace CSV (default: <out>.trace.csv)")
    t.add_argument("--variant", choices=("m2a", "a2m", "joint"), default="joint")
    t.add_argument("--objective", choices=("contrastive", "cluster"), default="cluster")
    for i in range(1, 6):
        t.add_argument(f"--lambda{i}", type=float, default=1.0)
    t.add_argument("--lambda-cls", type=float, default=1.0)
    t.add_argument("--tau", type=float, default=0.07)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--learnable-centers", type=_bool, default=True)
    t.add_argument("--c-j", type=int, default=256)
    t.add_argument("--train-fraction", type=float, default=None, help="train on a stratified split only")
    t.add_argument("--split-seed", type=int, default=0)

    e = sub.add_parser("eval", help="compute the metric report")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--per-style-csv", default=None)
    e.add_argument("--k-retrieval", type=_k_list, default=(1, 3))
    e.add_argument("--train-fraction", type=float, default=None, help="evaluate the held-out split only")
    e.add_argument("--split-seed", type=int, default=0)

    g = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    g.add_argument("--instances", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=float, default=gradcheck.DEFAULT_STEP)
    g.add_argument("--tolerance", type=float, default=gradcheck.DEFAULT_TOLERANCE)

    j = sub.add_parser("project", help="2-D PCA export of embeddings")
    j.add_argument("--data", required=True)
    j.add_argument("--model", default=None, help="project through this model first")
    j.add_argument("--modality", choices=("motion", "music"), default="motion")
    j.add_argument("--seed", type=int, default=0)
    j.add_argument("--out", required=True)
    return p


def _print_config(args):
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())}
    print(json.dumps({"config": cfg}, sort_keys=True), flush=True)


def _cmd_synth(args):
    spec = synthgen.SyntheticSpec(args.k, args.latent_dim, args.c_m, args.c_a, args.n_per_class, args.noise_sigma, args.seed)
    ds, gt = synthgen.generate(spec)
    out = Path(args.out)
    embedding_io.save_dataset(ds, out)
    synthgen.save_ground_truth(gt, out / "ground_truth.json")
    print(f"wrote {len(ds)} records to {out}")


def _cmd_pretrain(args):
    ids, windows, styles = encoder_stub.load_windows(args.windows)
    cfg = encoder_stub.AutoencoderConfig(
        T=windows.shape[1], c=windows.shape[2], c_M=args.c_m, hidden=args.hidden, activation=args.activation,
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
    )
    model, losses = encoder_stub.pretrain_autoencoder(windows, cfg, args.seed)
    encoder_stub.save_autoencoder(model, cfg, args.out, args.seed)
    loss_path = args.loss_csv or str(args.out) + ".loss.csv"
    atomic_write_text(loss_path, encoder_stub.loss_csv(losses))
    print(f"reconstruction mse {losses[0]:.6g} -> {losses[-1]:.6g}")
    if args.embeddings_out:
        if styles is None:
            raise ValidationError("--embeddings-out needs a style field on every window")
        vocab = StyleVocabulary(tuple(dict.fromkeys(styles)))
        records = encoder_stub.encode_windows(model, windows, ids, styles)
        embedding_io.save_dataset(EmbeddingDataset(records, vocab, model.c_M, args.c_a), args.embeddings_out)


def _cmd_train(args):
    ds = embedding_io.load_dataset(args.data)
    if args.train_fraction is not None:
        ds, _ = embedding_io.split(ds, args.train_fraction, args.split_seed)
    weights = LossWeights(args.lambda1, args.lambda2, args.lambda3, args.lambda4, args.lambda5, args.lambda_cls, args.tau)
    cfg = trainer.TrainConfig(
        variant=args.variant, objective=args.objective, weights=weights, learnable_centers=args.learnable_centers,
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed, c_J=args.c_j,
    )
    model, trace = trainer.train(ds, cfg)
    trainer.save_checkpoint(model, cfg, args.out)
    atomic_write_text(args.trace or str(args.out) + ".trace.csv", trace.to_csv())
    print(f"loss {trace.totals[0]:.6g} -> {trace.totals[-1]:.6g} over {cfg.epochs} epochs")


def _cmd_eval(args):
    model = trainer.load_checkpoint(args.model)
    ds = embedding_io.load_dataset(args.data)
    if args.train_fraction is not None:
        _, ds = embedding_io.split(ds, args.train_fraction, args.split_seed)
    report = metrics.evaluate(model, ds, args.k_retrieval)
    metrics.save_report(report, args.out, args.per_style_csv)
    print(report.summary())


def _cmd_gradcheck(args):
    results = gradcheck.run_all(args.instances, args.seed, args.h, args.tolerance)
    print(gradcheck.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def _cmd_project(args):
    ds = embedding_io.load_dataset(args.data)
    ids, X, y = ds.matrix(args.modality)
    if args.model:
        model = trainer.load_checkpoint(args.model)
        X = (model.forward_motion if args.modality == MOTION else model.forward_audio)(X)[0]
    coords = metrics.project_2d(X, args.seed)
    atomic_write_text(args.out, metrics.projection_csv(ids, [ds.styles.labels[k] for k in y], coords))


COMMANDS = {
    "synth": _cmd_synth,
    "pretrain-ae": _cmd_pretrain,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "project": _cmd_project,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    _print_config(args)
    try:
        code = COMMANDS[args.command](args)
    except (ValidationError, UnsupportedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericError, MdscError) as exc:
        ctx = ""
        if getattr(exc, "epoch", None) is not None:
            ctx = f" (epoch {exc.epoch}, term {exc.term})"
        print(f"numeric error: {exc}{ctx}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
