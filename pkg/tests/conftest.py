from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thermocontact.materials import PHI_B_FORMS, BoundaryData, FrictionModel
from thermocontact.mesh import build_dof_maps, build_unit_square_mesh, load_mesh

SINGLE_TRIANGLE = """\
nodes 3 triangles 1 edges 3
0.0 0.0
1.0 0.0
0.0 1.0
0 1 2
0 1 C
1 2 N
2 0 D
"""


@pytest.fixture
def square2():
    """n=2 unit square with the fixture partition: left D, bottom C, rest N."""
    mesh = build_unit_square_mesh(2)
    return mesh, build_dof_maps(mesh)


@pytest.fixture
def square4():
    mesh = build_unit_square_mesh(4)
    return mesh, build_dof_maps(mesh)


@pytest.fixture
def tri_mesh(tmp_path):
    """Single unit right triangle: contact bottom, traction hypotenuse, fixed left."""
    path = tmp_path / "tri.mesh"
    path.write_text(SINGLE_TRIANGLE)
    mesh = load_mesh(path)
    return mesh, build_dof_maps(mesh)


def const_bd(h_N=1.0, H_N=1.0, hc=1.0, Hc=1.0, phi="zero", f0=(0.0, 0.0), f2=(0.0, 0.0)):
    """Boundary data with constant coefficients and a named ambient potential."""
    f0 = np.asarray(f0, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    return BoundaryData(
        h_N=h_N,
        H_N=H_N,
        h_C=lambda F: hc + 0.0 * np.asarray(F, dtype=float),
        H_C=lambda F: Hc + 0.0 * np.asarray(F, dtype=float),
        H_C_bar=max(Hc, 1e-30),
        phi_b=PHI_B_FORMS[phi],
        f_0=lambda x, t: np.broadcast_to(f0, np.asarray(x).shape).copy(),
        f_2=lambda x, t: np.broadcast_to(f2, np.asarray(x).shape).copy(),
    )


def const_friction(mu0=0.3, F0=0.2):
    """Constant-coefficient friction with an exact linear potential."""
    return FrictionModel(
        mu=lambda s: mu0 + 0.0 * np.asarray(s, dtype=float),
        mu_bar=mu0,
        d_mu=0.0,
        F_field=lambda x, t: np.full(np.asarray(x).shape[:-1], F0),
        F_bar=F0,
        mu_prime=lambda s: 0.0 * np.asarray(s, dtype=float),
        mu_antiderivative=lambda r: mu0 * np.asarray(r, dtype=float),
    )
