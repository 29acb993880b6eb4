import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coverassert.config import Config, GatewayConfig  # noqa: E402
from coverassert.data import toy_design  # noqa: E402
from coverassert.gateway import Gateway  # noqa: E402
from coverassert.sva_ast import Ast, AstNode, NodeKind  # noqa: E402


def tree_to_ast(kinds, kids) -> Ast:
    nodes = tuple(AstNode(i, NodeKind(k), tuple(kids[i]), (i, i + 1), f"s{i}" if k == NodeKind.SIGNAL_REF else "")
                  for i, k in enumerate(kinds))
    return Ast(nodes, 0)


@pytest.fixture
def gateway():
    return Gateway(GatewayConfig())


@pytest.fixture
def toy():
    return Path(toy_design())


@pytest.fixture
def config():
    return Config()
