import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dogm.grid import N_MASSES, GridSpec, Pose

settings.register_profile("dogm", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dogm")


@pytest.fixture
def small_spec():
    return GridSpec.centered_on(Pose(0.0, 0.0), edge_length=10.0, resolution=0.2, k_max=50)


def random_masses(rng: np.random.Generator, n: int) -> np.ndarray:
    """Dirichlet masses with a share of exact zeros so degenerate cases show up."""
    m = rng.dirichlet(np.ones(N_MASSES), size=n)
    m[rng.random(m.shape) < 0.2] = 0.0
    bad = m.sum(axis=1) == 0
    m[bad, -1] = 1.0
    return m / m.sum(axis=1, keepdims=True)


def make_state(spec, particles, lam=None, seed=0):
    """Tracker state holding ``particles`` with mixture weights ``lam`` (zeros by default)."""
    from dogm.tracker import ParticleSet, TrackerState

    state = TrackerState.initial(spec, seed)
    state.particles = ParticleSet.from_particles(particles, spec)
    state.lam = np.zeros(spec.n_cells) if lam is None else np.asarray(lam, dtype=float)
    return state


def cell_center(spec, ix, iy):
    return spec.origin.x + (ix + 0.5) * spec.resolution, spec.origin.y + (iy + 0.5) * spec.resolution


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
