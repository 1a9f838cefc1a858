import argparse
import os.path
import sys

from loguru import logger

from wpcross.harness import ScenarioConfig, run_scenario, validate
from wpcross.lib.config import config
from wpcross.lib.errors import ConfigurationError, WpcrossError
from wpcross.lib.utils import ensure_directory, write_json


def parse_eps(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Could not parse ε list '{text}': {e}") from e


def setup_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")
    log_directory = ensure_directory(config.log_file_directory)
    logger.add(os.path.join(log_directory, "wpcross_{time}.log"), level="DEBUG", rotation="10 MB", retention=10)


def main(args: argparse.Namespace) -> int:
    if args.config:
        config.load(args.config)
    if args.scenario:
        config.override("scenario", args.scenario)
    if args.eps:
        config.override("eps", parse_eps(args.eps))
    if args.out:
        config.override("output.directory", args.out)

    setup_logging(args.verbose)
    cfg = ScenarioConfig.from_config(config)

    if args.validate:
        report = validate(cfg)
        write_json(os.path.join(ensure_directory(cfg.output_directory), "validation.json"), report.as_dict())
        for entry in report.entries:
            logger.info(f"ε={entry['eps']:g}, δ={entry['delta']:.4g}: {entry['status']} "
                        f"{', '.join(f'{k}={v:.3g}' for k, v in entry['ratios'].items())}")
        return 0 if report.ok else 3

    run_scenario(cfg, config)
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Wave packets through conical crossings")
    parser.add_argument("--config", help="Settings file to load instead of settings.json")
    parser.add_argument("--scenario", help="lz-table, isotropic-crossing, plus-crossing or convergence")
    parser.add_argument("--eps", help="Comma separated list of semiclassical parameters, e.g. 4e-2,2e-2,1e-2")
    parser.add_argument("--out", help="Output directory for summary.json, CSV tables and dumps")
    parser.add_argument("--validate", action="store_true", help="Check the regime inequalities and exit")
    parser.add_argument("--verbose", action="store_true", help="Log debug output to the terminal")
    args = parser.parse_args()

    try:
        sys.exit(main(args))
    except WpcrossError as e:
        logger.exception(e)
        sys.exit(e.exit_code)
