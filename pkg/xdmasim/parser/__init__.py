from xdmasim.config.soc import SocConfig, parse_config
from xdmasim.parser.parser import (
    LookaheadStreamer,
    ParseError,
    UnexpectedEndOfInput,
    UnexpectedToken,
    parse_layout,
    parse_layout_pairs,
)
from xdmasim.parser.tasks import *
from xdmasim.parser.tokenizer import tokenize


def load_config(path: str) -> SocConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def load_tasks(path: str) -> TaskFile:
    with open(path, encoding="utf-8") as f:
        return parse_tasks(f.read())


def load_grid(path: str) -> SweepGrid:
    with open(path, encoding="utf-8") as f:
        return parse_grid(f.read())
