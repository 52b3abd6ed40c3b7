import numpy as np
import pytest

from dualgop.acoustic import AcousticModel, GmmState, PhoneHmm, PhoneInventory


def gauss(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return GmmState([1.0], [mean], [np.full(mean.shape, var)])


def hmm(phone, means, p_self=0.5, var=1.0):
    """Left-to-right HMM with one unit-variance Gaussian per state."""
    n = len(means)
    p_self = np.broadcast_to(np.asarray(p_self, dtype=float), (n,))
    return PhoneHmm(phone, [gauss(m, var) for m in means], np.log(p_self), np.log1p(-p_self))


def model(layout, p_self=0.5):
    """``layout``: {phone: (category, [state means])} in inventory order."""
    inv = PhoneInventory(tuple(layout), {p: c for p, (c, _) in layout.items()})
    return AcousticModel(inv, {p: hmm(p, means, p_self) for p, (_, means) in layout.items()})


def random_model(rng, num_phones, max_states, dim=2, with_silence=True, max_components=2):
    """Random GMM-HMM; the first phone is silence when ``with_silence``."""
    phones, cats, hmms = [], {}, {}
    for i in range(num_phones):
        p = "sil" if (with_silence and i == 0) else f"p{i}"
        cats[p] = "silence" if p == "sil" else ("vowel" if i % 2 else "consonant")
        states = []
        for _ in range(int(rng.integers(1, max_states + 1))):
            c = int(rng.integers(1, max_components + 1))
            states.append(GmmState(rng.dirichlet(np.ones(c)), rng.normal(0, 1.5, (c, dim)),
                                   rng.uniform(0.3, 2.0, (c, dim))))
        p_self = rng.uniform(0.1, 0.9, len(states))
        hmms[p] = PhoneHmm(p, states, np.log(p_self), np.log1p(-p_self))
        phones.append(p)
    return AcousticModel(PhoneInventory(tuple(phones), cats), hmms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
