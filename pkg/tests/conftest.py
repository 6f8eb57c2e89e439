import pytest

from eonprofile.topology import Network, deutsche_telekom, load_network


def write_net(tmp_path, nodes, edges, name="net"):
    nf = tmp_path / f"{name}_nodes.csv"
    ef = tmp_path / f"{name}_edges.csv"
    nf.write_text("id,x,y\n" + "".join(f"{n},0,0\n" for n in nodes))
    ef.write_text("a,b,length\n" + "".join(f"{a},{b},{w}\n" for a, b, w in edges))
    return nf, ef


def build_net(nodes, edges) -> Network:
    return Network(tuple(nodes), tuple((a, b, float(w)) for a, b, w in edges))


@pytest.fixture(scope="session")
def dt():
    return deutsche_telekom()


@pytest.fixture
def line3(tmp_path):
    return load_network(*write_net(tmp_path, "ABC", [("A", "B", 1), ("B", "C", 1)]))


# One line per acceptance criterion, filled in by tests/test_acceptance.py and
# echoed at the end of the run so it survives output capturing.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
