import numpy as np
import pytest

from fraclap.manifold import build_sphere, build_torus


def icosphere_off(subdiv: int) -> str:
    """ASCII OFF text of a unit icosphere with `subdiv` subdivisions."""
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdiv):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc),
                          (ab, bc, ca)]
        faces = new_faces
    lines = ["OFF", f"{len(verts)} {len(faces)} 0"]
    lines += [" ".join(f"{x:.17g}" for x in v) for v in verts]
    lines += ["3 %d %d %d" % f for f in faces]
    return "\n".join(lines)


@pytest.fixture(scope="session")
def torus1d():
    return build_torus(1, [2 * np.pi], [256], 64)


@pytest.fixture(scope="session")
def torus1d_fine():
    return build_torus(1, [2 * np.pi], [512], 400)


@pytest.fixture(scope="session")
def torus_wide():
    """T^1 of circumference 20, for short-distance Euclidean behavior."""
    return build_torus(1, [20.0], [1024], 700)


@pytest.fixture(scope="session")
def torus2d():
    return build_torus(2, [2 * np.pi, 2 * np.pi], [24, 24], 120)


@pytest.fixture(scope="session")
def sphere():
    return build_sphere(1.0, 12)


@pytest.fixture(scope="session")
def ico_off():
    return icosphere_off(3)
