"""Command line entry point: ``advfilter {train,attack,defend,eval,experiment}``.

Exit codes: 0 success, 2 parameter error, 3 I/O or format error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import attack as attack_mod
from .classifier import accuracy, default_classifier, forward, load_model, save_model, train
from .core import FormatError, NumericError, ParameterError, load_image, parse_data_source, save_image
from .filters import FilterSpec, apply_filter
from .harness import ExperimentConfig, run_experiment, summarize, write_records, write_summary
from .norms import NormKind

EXIT_OK = 0
EXIT_PARAMETER = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("advfilter")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAMETER, f"{self.prog}: error: {message}\n")


def per_norm_value(text: str):
    """Parse ``0.1`` or ``l1=20,l2=3,linf=0.1``."""
    if "=" not in text:
        return float(text)
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        out[NormKind.parse(key.strip()).value] = float(value)
    return out


def cmd_train(args):
    data = parse_data_source(args.data)
    f = default_classifier(data.image_shape, data.num_classes, seed=args.seed)
    history = []
    f = train(f, data, args.epochs, args.batch, args.lr, seed=args.seed, history=history)
    save_model(f, args.out)
    if history:
        print(f"final epoch mean loss {history[-1]:.6f}")
    print(f"training accuracy {accuracy(f, data):.4f}")


def cmd_attack(args):
    f = load_model(args.model)
    x = load_image(args.image)
    cfg = attack_mod.AttackConfig(args.norm, args.beta, args.target, args.lr, args.iters)
    result = attack_mod.craft(f, x, cfg)
    save_image(result.adversarial, args.out)
    print(
        f"success={str(result.success).lower()} iterations={result.iterations_used} "
        f"perturbation_norm={result.final_perturbation_norm:.6f} "
        f"target_probability={result.final_target_probability:.6f}"
    )


def cmd_defend(args):
    if args.sigma is not None and args.filter != "gaussian":
        raise ParameterError("--sigma only applies to --filter gaussian")
    spec = FilterSpec(args.filter, args.kernel, args.sigma)
    save_image(apply_filter(load_image(args.image), spec), args.out)


def cmd_eval(args):
    f = load_model(args.model)
    x = load_image(args.image)
    for y in (args.true, args.adv):
        if not 0 <= y < f.num_classes:
            raise ParameterError(f"class id {y} outside [0, {f.num_classes})")
    pred = forward(f, x)
    print(f"p_true={pred.probabilities[args.true]:.6f}")
    print(f"p_adv={pred.probabilities[args.adv]:.6f}")
    print(f"argmax={pred.argmax_label}")


def cmd_experiment(args):
    filters = [FilterSpec.parse(name) for name in args.filters.split(",") if name.strip()]
    cfg = ExperimentConfig(
        model=args.model,
        data=args.data,
        norms=[n.strip() for n in args.norms.split(",") if n.strip()],
        beta=per_norm_value(args.beta),
        learning_rate=per_norm_value(args.lr),
        max_iterations=args.iters,
        filters=filters,
        samples=args.samples,
        seed=args.seed,
        target=args.target,
    )
    records = run_experiment(cfg)
    summary = summarize(records)
    write_records(records, args.out_records)
    write_summary(summary, args.out_summary)
    for row in summary:
        label = "none" if row.filter_kind == "none" else f"{row.filter_kind}{row.kernel_size}"
        print(
            f"{row.attack_norm:5} {label:10} n={row.count:<4d} "
            f"p_true={row.mean_p_true:.3f} p_adv={row.mean_p_adv:.3f} "
            f"success={row.attack_success_rate:.2f} recovery={row.recovery_rate:.2f}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advfilter", description="Targeted norm-budgeted attacks and filter defenses for a small CNN.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train the default CNN and write an ADVM model file")
    p.add_argument("--data", required=True, help="IMAGES.idx,LABELS.idx or synthetic:SEED:COUNT")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="craft one targeted adversarial image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--norm", choices=[k.value for k in NormKind], required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("defend", help="apply a gaussian or median filter to an image")
    p.add_argument("--image", required=True)
    p.add_argument("--filter", choices=["gaussian", "median"], required=True)
    p.add_argument("--kernel", type=int, choices=[3, 5], required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("eval", help="print p_true, p_adv and the predicted label for one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--true", type=int, required=True)
    p.add_argument("--adv", type=int, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run the attack x filter grid and write CSV reports")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="IMAGES.idx,LABELS.idx or synthetic:SEED:COUNT")
    p.add_argument("--norms", default="l1,l2,linf")
    p.add_argument("--beta", required=True, help="one value, or per norm: l1=20,l2=3,linf=0.1")
    p.add_argument("--lr", default="0.01", help="one value, or per norm like --beta")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--filters", default="gaussian3,gaussian5,median3,median5")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", type=int, help="fix one target label instead of drawing per image")
    p.add_argument("--out-records", required=True)
    p.add_argument("--out-summary", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
