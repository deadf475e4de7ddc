import os
import json
import yaml
import hashlib
import logging
from datetime import datetime
from pathlib import Path
from dotenv import load_dotenv

VERSION = "0.3.0"

# Basic Logging Configuration
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(module)s - %(message)s')
logger = logging.getLogger("erklab")


class ErklabError(Exception):
    """Base class for errors raised by the library."""


class ConfigurationError(ErklabError, ValueError):
    """Invalid parameters, experiment configs or step-size partitions."""


class ShapeError(ErklabError, ValueError):
    """State vector does not match the operator or grid it is used with."""


def get_project_root():
    """Returns the absolute path to the project root directory."""
    return Path(__file__).parent.absolute()

def load_config():
    """Load harness defaults from config.yaml."""
    config_path = get_project_root() / "config.yaml"
    with open(config_path, 'r') as file:
        return yaml.safe_load(file)

def load_environment():
    """Load environment variables from .env file and apply the log level."""
    env_path = get_project_root() / ".env"
    load_dotenv(env_path)
    level = os.getenv("ERKLAB_LOG_LEVEL") or load_config().get('runtime', {}).get('log_level', 'INFO')
    logger.setLevel(str(level).upper())

def get_output_dir(cli_dir=None, config_dir=None):
    """
    Resolve the directory results are written to.

    Args:
        cli_dir: value of --out, if given
        config_dir: output.directory from the experiment config, if given

    Returns:
        Path: existing directory
    """
    if cli_dir:
        out = Path(cli_dir)
    elif config_dir:
        out = Path(config_dir)
    elif os.getenv("ERKLAB_OUTPUT_DIR"):
        out = Path(os.getenv("ERKLAB_OUTPUT_DIR"))
    else:
        out = get_project_root() / "results"
    os.makedirs(out, exist_ok=True)
    return out

def get_default_threads():
    """Worker count from ERKLAB_THREADS or config.yaml."""
    env_threads = os.getenv("ERKLAB_THREADS")
    if env_threads:
        try:
            return max(1, int(env_threads))
        except ValueError:
            raise ConfigurationError(f"ERKLAB_THREADS must be an integer, got {env_threads!r}")
    return int(load_config().get('runtime', {}).get('threads', 1))

def get_timestamp():
    """Returns current timestamp in ISO format."""
    return datetime.now().isoformat()

def config_hash(resolved):
    """SHA-256 of the canonical JSON form of a resolved config dict."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

def atomic_write_text(path, text):
    """Write text to path through a temporary file and a rename."""
    path = Path(path)
    tmp_path = path.with_name(f".{path.name}.tmp")
    with open(tmp_path, 'w', newline='\n') as file:
        file.write(text)
    os.replace(tmp_path, path)
    logger.info(f"Wrote {path}")
    return path
