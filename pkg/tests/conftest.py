import pytest
from hypothesis import settings

from dqm.families import make_family

settings.register_profile("dqm", max_examples=25, deadline=None)
settings.load_profile("dqm")


def meixner(beta=2.0, c=0.5):
    return make_family("M", {"beta": beta, "c": c})


def racah(N=8, b=12.5, c=1.5, d=3.0):
    return make_family("R", {"a": -float(N), "b": b, "c": c, "d": d}, N=N)


def qracah(N=10, q=0.9, b=0.02, c=0.8, d=0.3):
    return make_family("qR", {"a": q ** -N, "b": b, "c": c, "d": d}, q=q, N=N)


# one valid parameter set per family
STANDARD = {
    "H": lambda: make_family("H"),
    "L": lambda: make_family("L", {"g": 1.3}),
    "J": lambda: make_family("J", {"g": 2.2, "h": 3.6}),
    "MP": lambda: make_family("MP", {"a": 1.3}),
    "W": lambda: make_family("W", {"a1": 0.6, "a2": 0.8, "a3": 1.5, "a4": 1.7}),
    "AW": lambda: make_family("AW", {"a1": 0.6, "a2": 0.7, "a3": 0.3, "a4": 0.2}, q=0.7),
    "M": meixner,
    "R": racah,
    "qR": qracah,
}


@pytest.fixture(params=sorted(STANDARD))
def any_family(request):
    return STANDARD[request.param]()


@pytest.fixture(params=["M", "R", "qR"])
def rdqm_family(request):
    return STANDARD[request.param]()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
