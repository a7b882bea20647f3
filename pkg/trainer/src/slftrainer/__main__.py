"""Train a generator and export it: python -m slftrainer --config cfg.json"""

import argparse
import sys

from .config import TrainConfig, load_config
from .distill import distill_to_dense
from .export import export_dense
from .train import TrainingDiverged, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="slftrainer", description=__doc__)
    parser.add_argument("--config", help="training config JSON")
    parser.add_argument("--export", help="output weight file (overrides config export_path)")
    parser.add_argument("--seed", type=int)
    args = parser.parse_args(argv)

    config = load_config(args.config) if args.config else TrainConfig()
    if args.export or args.seed is not None:
        import dataclasses

        config = dataclasses.replace(
            config,
            export_path=args.export or config.export_path,
            seed=config.seed if args.seed is None else args.seed,
        )
    if not config.export_path:
        print("no export path given (--export or config export_path)", file=sys.stderr)
        return 2

    try:
        generator, _ = train(config)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    if config.architecture == "gan-conv":
        generator, _ = distill_to_dense(generator, seed=config.seed)
    export_dense(generator, config.export_path)
    print(f"exported generator to {config.export_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
