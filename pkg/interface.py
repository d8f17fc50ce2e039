import argparse

from config import RunConfig, load_config, parse_assignments
from samgc.layer import VARIANTS

COMMANDS = {
    "train-node": "train the node classifier on Cora",
    "eval-node": "evaluate a node-classifier checkpoint on Cora",
    "train-pc": "train the point-cloud classifier on synthetic shapes",
    "eval-pc": "evaluate a point-cloud checkpoint on freshly generated shapes",
    "ablation": "compare graphsage, sagc, nwa_sagc and samgc over several seeds",
    "gradcheck": "run the finite-difference gradient suite",
    "dump-features": "write per-edge structural features of the first layer",
}
NEEDS_CHECKPOINT = ("eval-node", "eval-pc")
CHECKPOINT_HELP = {
    "train-node": "where to write the trained model (default: run directory)",
    "train-pc": "where to write the trained model (default: run directory)",
    "eval-node": "checkpoint to evaluate",
    "eval-pc": "checkpoint to evaluate",
    "dump-features": "take the first layer from this node checkpoint",
}


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value config file")
    common.add_argument("--data-dir", metavar="PATH", help="directory with cora.*")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--epochs", type=int, metavar="N")
    common.add_argument("--hops", type=int, metavar="N")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--out", metavar="DIR", help="parent of the run directory")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key; repeatable",
    )
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v info, -vv debug"
    )
    common.add_argument("--quiet", action="store_true", help="no banner")
    return common


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="samgc",
        description="Structure-aware multi-hop graph convolution experiments.",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, help_text in COMMANDS.items():
        sub = commands.add_parser(name, parents=[common], help=help_text)
        if name in CHECKPOINT_HELP:
            sub.add_argument(
                "--checkpoint",
                metavar="PATH",
                required=name in NEEDS_CHECKPOINT,
                help=CHECKPOINT_HELP[name],
            )
        if name == "ablation":
            sub.add_argument("--dataset", choices=("cora",), default="cora")
            sub.add_argument("--seeds", type=int, metavar="N")
    return parser


def flag_overrides(args):
    """Config overrides from flags; ``--set`` is applied first, named flags win."""
    overrides = parse_assignments(args.set)
    named = {
        "data_dir": args.data_dir,
        "seed": args.seed,
        "epochs": args.epochs,
        "hops": args.hops,
        "variant": args.variant,
        "out_dir": args.out,
        "seeds": getattr(args, "seeds", None),
    }
    if args.command in ("train-pc", "eval-pc"):
        named["pc_epochs"] = named.pop("epochs")
    overrides.update({key: value for key, value in named.items() if value is not None})
    return overrides


def resolve_config(args) -> RunConfig:
    return load_config(args.config, flag_overrides(args))
