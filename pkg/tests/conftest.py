import random
from pathlib import Path

import pytest

from foresight_planner.gridworld.scene import COLORS, SHAPES, Region, Scene, SceneObject, rect_cells

SUITE_DIR = Path(__file__).resolve().parents[1] / "src" / "foresight_planner" / "data" / "suite"


def random_scene(seed: int, n_objects=None, with_drawer=None, width=12, height=9) -> Scene:
    """Seeded random scene: one or two regions on the right edge, loose objects elsewhere."""
    rng = random.Random(seed)
    regions = [Region("box", "box", 2, rect_cells(width - 3, 0, width - 1, 2))]
    if with_drawer if with_drawer is not None else rng.random() < 0.5:
        regions.append(Region("drawer", "drawer", 6, rect_cells(width - 3, height - 3, width - 1, height - 1)))
    taken = set().union(*(r.cells for r in regions))
    free = [(x, y) for y in range(height) for x in range(width) if (x, y) not in taken]
    n = rng.randint(1, 5) if n_objects is None else n_objects
    cells = rng.sample(free, n)
    combos = rng.sample([(c, s) for c in range(len(COLORS)) for s in range(len(SHAPES))], n)
    objects = tuple(SceneObject(f"o{i}", c, s, cell) for i, ((c, s), cell) in enumerate(zip(combos, cells)))
    gripper = (rng.randrange(width), rng.randrange(height))
    return Scene(width, height, objects, tuple(regions), gripper)


@pytest.fixture
def suite_dir() -> Path:
    return SUITE_DIR


@pytest.fixture
def simple_scene() -> Scene:
    objs = (SceneObject("red", 0, 0, (2, 3)), SceneObject("ball", 2, 1, (5, 1)))
    regions = (Region("box", "box", 2, rect_cells(9, 5, 11, 7)),)
    return Scene(12, 9, objs, regions, (0, 0))
