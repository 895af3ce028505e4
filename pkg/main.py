"""
RestQuest - Main Program Entry Point
Curiosity-Driven and Experience-Driven Black-Box REST API Testing
"""

import os
import sys
import json
import argparse
import logging
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from config.settings import SIM_KINDS, ConfigInvalid, LLM_PROVIDERS, SessionConfig
from core.oas_model import EmptyApi, MalformedDocument, UnsupportedVersion, load_spec
from core.interaction import read_interactions
from core.metrics import build_summary
from core.rl_core import CheckpointMismatch
from core.session import TargetUnreachable, run_session
from core.sim_apis import SimServer, make_sim
from utils import ensure_dir, write_json

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNREACHABLE = 2

_CONFIG_ERRORS = (ConfigInvalid, FileNotFoundError, MalformedDocument, UnsupportedVersion, EmptyApi,
                  CheckpointMismatch)


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """Setup logging configuration"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restquest",
        description="Curiosity-Driven and Experience-Driven REST API Testing",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Usage Examples:
  python main.py test --sim ecomm --budget 1500 --seed 7 --out runs/a
  python main.py test --spec api.yaml --base-url http://localhost:8080
  python main.py test --sim chain --explorer uniform       # Ablation without PPO
  python main.py sim serve --sim ecomm --port 8080
  python main.py sim spec --sim chain --chain-length 4 > chain.yaml
  python main.py report --log runs/a/interactions.jsonl --spec runs/a/openapi.yaml
        """
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Log level (default: INFO)"
    )
    subparsers = parser.add_subparsers(dest="command")

    # test
    test = subparsers.add_parser("test", help="Run a testing session")
    test.add_argument("--config", help="JSON or YAML session config; flags override it")
    test.add_argument("--sim", choices=SIM_KINDS, help="Test a bundled simulated API")
    test.add_argument("--chain-length", type=int, help="Stages of the chain sim (default: 4)")
    test.add_argument("--spec", help="OpenAPI 3 document of the real API")
    test.add_argument("--base-url", help="Base URL of the real API (default: servers[0] of the spec)")
    test.add_argument("--budget", type=int, help="Request budget (default: 1500)")
    test.add_argument("--wall-clock", type=float, help="Optional wall-clock budget in seconds")
    test.add_argument("--seed", type=int, help="Session seed (default: 0)")
    test.add_argument("--out", help="Output directory (default: runs/latest)")
    test.add_argument("--explorer", choices=["ppo", "uniform"], help="Operation chooser (default: ppo)")
    test.add_argument("--load-policy", help="Warm-start from a policy checkpoint")
    test.add_argument("--epsilon", type=float, help="Random-decision rate of input agents (default: 0.1)")
    test.add_argument("--intensify-cap", type=int, help="Mutants per intensification (default: 50, 0 disables)")
    test.add_argument("--header", action="append", default=[], metavar="NAME:VALUE",
                      help="Static auth header, ${VAR} is read from the environment (repeatable)")
    test.add_argument("--llm-provider", choices=LLM_PROVIDERS, help="LLM dictionary source (default: none)")
    test.add_argument("--llm-dictionary", help="JSON dictionary file (provider 'file')")
    test.add_argument("--llm-endpoint", help="Completion endpoint URL (provider 'endpoint')")
    test.add_argument("--llm-model", help="Model name for openai/gemini")

    # sim
    sim = subparsers.add_parser("sim", help="Serve a simulated API or emit its OpenAPI document")
    sim_commands = sim.add_subparsers(dest="sim_command")
    serve = sim_commands.add_parser("serve", help="Serve a sim over localhost HTTP")
    serve.add_argument("--sim", required=True, choices=SIM_KINDS)
    serve.add_argument("--chain-length", type=int, default=4)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    spec = sim_commands.add_parser("spec", help="Print a sim's OpenAPI document as YAML")
    spec.add_argument("--sim", required=True, choices=SIM_KINDS)
    spec.add_argument("--chain-length", type=int, default=4)
    spec.add_argument("--out", help="Write to a file instead of stdout")

    # report
    report = subparsers.add_parser("report", help="Recompute the summary from an interaction log")
    report.add_argument("--log", required=True, help="interactions.jsonl of a session")
    report.add_argument("--spec", required=True, help="OpenAPI document the session tested")
    report.add_argument("--out", help="Write summary.json here (default: stdout)")

    return parser


def config_from_args(args: argparse.Namespace) -> SessionConfig:
    """Load the optional config file and apply command line overrides"""
    config = SessionConfig.from_file(args.config) if args.config else SessionConfig()

    if args.sim is not None:
        config.target.sim = args.sim
    if args.chain_length is not None:
        config.target.chain_length = args.chain_length
    if args.spec is not None:
        config.target.spec_path = args.spec
    if args.base_url is not None:
        config.target.base_url = args.base_url
    if args.budget is not None:
        config.budget.requests = args.budget
    if args.wall_clock is not None:
        config.budget.wall_clock_seconds = args.wall_clock
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    if args.explorer is not None:
        config.explorer.mode = args.explorer
    if args.load_policy is not None:
        config.load_policy = args.load_policy
    if args.epsilon is not None:
        config.generator.epsilon = args.epsilon
    if args.intensify_cap is not None:
        config.intensifier.cap = args.intensify_cap
        config.intensifier.enabled = args.intensify_cap > 0
    for header in args.header:
        name, sep, value = header.partition(":")
        if not sep or not name.strip():
            raise ConfigInvalid(f"header must look like NAME:VALUE, got '{header}'")
        config.target.auth_headers[name.strip()] = value.strip()
    if args.llm_provider is not None:
        config.llm.provider = args.llm_provider
    if args.llm_dictionary is not None:
        config.llm.dictionary_path = args.llm_dictionary
        if args.llm_provider is None:
            config.llm.provider = "file"
    if args.llm_endpoint is not None:
        config.llm.endpoint_url = args.llm_endpoint
    if args.llm_model is not None:
        config.llm.model = args.llm_model

    # Re-run env loading so provider-specific keys and ${VAR} headers follow the overrides
    config.load_from_env()
    config.validate()
    return config


def run_test(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    ensure_dir(config.output_dir)
    setup_logging(args.log_level, os.path.join(config.output_dir, "session.log"))
    logger = logging.getLogger(__name__)

    logger.info("=== RestQuest REST API Testing ===")
    logger.info(f"Target: {'sim ' + config.target.sim if config.simulated else config.target.spec_path}")
    logger.info(f"Output directory: {config.output_dir}")

    report = run_session(config)
    logger.info(f"Summary: {report.paths['summary']}")
    return EXIT_OK


def run_sim(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    if args.sim_command == "spec":
        text = make_sim(args.sim, args.chain_length).openapi_yaml()
        if args.out:
            with open(args.out, 'w', encoding='utf-8') as f:
                f.write(text)
            logger.info(f"OpenAPI document written: {args.out}")
        else:
            sys.stdout.write(text)
        return EXIT_OK

    server = SimServer(make_sim(args.sim, args.chain_length, args.seed), args.host, args.port)
    try:
        server.serve_forever()
    finally:
        server.shutdown()
    return EXIT_OK


def run_report(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    api = load_spec(args.spec)
    interactions = read_interactions(args.log)
    summary = build_summary(interactions, api)
    if args.out:
        write_json(args.out, summary)
        logger.info(f"Summary written: {args.out}")
    else:
        sys.stdout.write(json.dumps(summary, indent=2, ensure_ascii=False) + "\n")
    return EXIT_OK


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    logger = logging.getLogger(__name__)

    if args.command is None or (args.command == "sim" and args.sim_command is None):
        parser.print_usage(sys.stderr)
        logger.error("No command given")
        return EXIT_CONFIG

    try:
        if args.command == "test":
            return run_test(args)
        if args.command == "sim":
            return run_sim(args)
        return run_report(args)
    except _CONFIG_ERRORS as e:
        logger.error(f"Configuration error: {str(e)}")
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except TargetUnreachable as e:
        logger.error(str(e))
        return EXIT_UNREACHABLE
    except KeyboardInterrupt:
        logger.info("User interrupted operation")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Processing failed: {str(e)}")
        return EXIT_CONFIG


def main():
    """Main function"""
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
