import sys
from typing import Optional

from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from crackSeg.config import config
from crackSeg.errors import ConfigError

yaml = YAML(typ="safe", pure=True)
yaml.default_flow_style = False


def read_yaml(yaml_text: str = "", filename: str = "") -> Optional[dict]:
    """
    Reads YAML content from a string or a file.

    Args:
        yaml_text (str): YAML content as a string.
        filename (str): Path to the YAML file.

    Returns:
        dict: Parsed YAML content as a dictionary (empty for an empty document).
    """
    if not yaml_text and not filename:
        config.logger.warning("Neither yaml text nor filename have been provided.")
        return None
    try:
        if yaml_text:
            data = yaml.load(yaml_text)
        else:
            with open(filename, "r") as stream:
                data = yaml.load(stream)
    except YAMLError as e:
        source = filename or "The text"
        config.logger.error(f"{source} could not be read.")
        raise ConfigError(f"{source} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        message = f"{filename or 'YAML text'} must hold a flat `key: value` mapping."
        config.logger.error(message)
        raise ConfigError(message)
    return data


def write_yaml(data: dict, filename: str = None) -> None:
    """
    Writes a dictionary to a YAML file or prints it to stdout.

    Args:
        data (dict): Data to be written to YAML.
        filename (str): Path to the YAML file.
    """
    try:
        if filename:
            with open(filename, "w") as stream:
                yaml.dump(data, stream)
        else:
            yaml.dump(data, sys.stdout)
    except OSError as e:
        config.logger.error(f"The {filename} could not be written.")
        raise e
