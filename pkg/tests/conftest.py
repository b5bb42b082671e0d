import numpy as np
import pytest

from ncgeom.clifford import build_gamma_rep
from ncgeom.fields import build_deformation, spin_connection_B
from ncgeom.grid import TorusGrid
from ncgeom.riemann import conformal_metric, flat_metric

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def conformal_sigma(grid, amp=0.05):
    x = grid.coords()
    return amp * np.sin(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1])


def conformal_fields(size, amp=0.05):
    grid = TorusGrid.uniform(2, size)
    rep = build_gamma_rep(2)
    m = conformal_metric(grid, conformal_sigma(grid, amp))
    return build_deformation(m, rep, 0.0, B=spin_connection_B(m, rep))


def deformed_fields(size=8, kappa=0.05, split=True, flat=False):
    """Conformal base plus alpha, phi and extra B terms.

    With ``split`` the alpha generators carry identity parts so the symbol
    has two distinct eigenvalue branches.
    """
    grid = TorusGrid.uniform(2, size)
    rep = build_gamma_rep(2)
    x, y = grid.coords()
    m = flat_metric(grid) if flat else conformal_metric(grid, conformal_sigma(grid))
    G = np.array(list(rep.gammas) + [rep.chirality])
    I2 = np.eye(2)
    c_y = np.cos(2 * np.pi * y)[..., None, None]
    s_x = np.sin(2 * np.pi * x)[..., None, None]
    if split:
        alpha = np.stack([(I2 + G[1]) * c_y, (0.5 * I2 + G[0]) * s_x + 0.3 * I2], axis=2)
    else:
        alpha = np.stack([G[1] * c_y, (G[0] + G[2]) * s_x], axis=2)
    phi = np.cos(2 * np.pi * (x + y))[..., None, None] * G[0]
    extra = np.stack([1j * s_x * G[2], 1j * np.cos(2 * np.pi * y)[..., None, None] * G[0]], axis=2)
    B = spin_connection_B(m, rep) + 0.3 * extra
    return build_deformation(m, rep, kappa, alpha=alpha, phi=phi, B=B)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NCGEOM_CACHE_DIR", str(tmp_path / "cache"))
