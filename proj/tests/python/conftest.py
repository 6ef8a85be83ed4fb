import pytest

import lopmap


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A scene, cloud and a briefly trained checkpoint shared by the smoke tests."""
    root = tmp_path_factory.mktemp("run")
    cfg = lopmap.override(
        lopmap.Config(),
        train={"epochs": 2, "samples_per_epoch": 4096},
        eval={"points": 200},
    )
    losses = []
    lopmap.gen_scene(cfg, root / "scene")
    lopmap.build_cloud(cfg, root / "scene", root / "cloud")
    lopmap.train(cfg, root / "cloud" / "cloud.lopf", root / "train", lambda e, l: losses.append(l))
    return cfg, root, losses
