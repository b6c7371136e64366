import numpy as np
import pytest

from reducible_sde.datasets import load_gagurine, load_loblolly
from reducible_sde.fitting import fit_sde
from reducible_sde.hierarchy import ParamSpec, SdeModel


@pytest.fixture(scope="session")
def gag():
    t, x, _ = load_gagurine().arrays()
    return t, x


@pytest.fixture(scope="session")
def loblolly():
    return load_loblolly()


@pytest.fixture(scope="session")
def tree301():
    return load_loblolly(["301"])


def example2_specs(a=70.0, b=0.1, c=0.5, eta=0.5):
    return [ParamSpec("a", a, 0, 100), ParamSpec("b", b, 0, 1),
            ParamSpec("c", c, 0, 2), ParamSpec("eta", eta, 0, 1)]


def example3_specs(local):
    return [ParamSpec("a", 72.0, scope="local" if "a" in local else "global"),
            ParamSpec("b", 0.1, scope="local" if "b" in local else "global"),
            ParamSpec("c", 0.5),
            ParamSpec("eta", 0.0, fixed=True)]


@pytest.fixture(scope="session")
def ex2_additive(tree301):
    model = SdeModel.build(tree301, example2_specs(c=1.0), "richards_additive")
    return fit_sde(model, "two-stage")


@pytest.fixture(scope="session")
def ex2_mult(tree301):
    model = SdeModel.build(tree301, example2_specs(a=72.0), "richards_mult")
    return fit_sde(model)


@pytest.fixture(scope="session")
def ex3_fits(loblolly):
    out = {}
    for key, local in (("a", "a"), ("b", "b"), ("ab", "ab")):
        model = SdeModel.build(loblolly, example3_specs(local), "richards_scaled")
        out[key] = fit_sde(model)
    return out


def family_grid(name, n=100, seed=0):
    """Random ``(x, params)`` points inside the domain of a built-in family."""
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        if name in ("identity", "log"):
            pts.append((rng.uniform(0.1, 50), {}))
        elif name == "box_cox":
            pts.append((rng.uniform(0.1, 50), {"lam": rng.uniform(-2, 2)}))
        elif name == "power_richards":
            pts.append((rng.uniform(0.5, 80), {"c": rng.uniform(0.1, 2)}))
        elif name == "richards_scale":
            pts.append((rng.uniform(0.5, 80), {"a": rng.uniform(50, 90), "c": rng.uniform(0.1, 2)}))
        elif name == "log_mult_richards":
            a = rng.uniform(50, 90)
            pts.append((rng.uniform(0.5, 0.9 * a), {"a": a, "c": rng.uniform(0.1, 2)}))
        else:
            raise KeyError(name)
    return pts


# -- acceptance report ---------------------------------------------------------
ACCEPTANCE_LINES: list[str] = []


class Criterion:
    """Collects the checks of one acceptance criterion and prints one verdict line."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failed = []
        self.n = 0

    def close(self, label, got, want, tol, rel=False):
        scale = abs(want) if rel else 1.0
        ok = abs(got - want) <= tol * scale
        self.n += 1
        if not ok:
            kind = "rel" if rel else "abs"
            self.failed.append(f"{label}: got {got:.8g}, want {want:.8g} ({kind} tol {tol:g})")
        return ok

    def true(self, label, cond):
        self.n += 1
        if not cond:
            self.failed.append(label)
        return cond

    def finish(self):
        status = "PASS" if not self.failed else "FAIL"
        line = f"criterion {self.number} [{status}] {self.title} ({self.n - len(self.failed)}/{self.n} checks)"
        if self.failed:
            line += "\n    " + "\n    ".join(self.failed)
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not self.failed, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
