import json
import os

import pytest

from cliquefuse.synth import NoiseSpec, generate_video, load_noise_file, load_scene_file

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
PLUGINS = os.path.join(os.path.dirname(__file__), "plugins")


@pytest.fixture(scope="session")
def corpus20_dir(tmp_path_factory):
    """The frozen 20-video noisy corpus, rendered from the checked-in specs."""
    root = tmp_path_factory.mktemp("corpus20")
    scenes = load_scene_file(os.path.join(FIXTURES, "corpus20", "scenes.json"))
    noise = load_noise_file(os.path.join(FIXTURES, "corpus20", "noise.json"))
    for scene in scenes:
        generate_video(scene, noise, str(root))
    return str(root)


@pytest.fixture(scope="session")
def noisefree_dir(tmp_path_factory):
    """Static clean scenes: every stage should reproduce ground truth exactly."""
    root = tmp_path_factory.mktemp("noisefree")
    scenes = load_scene_file(os.path.join(FIXTURES, "noisefree", "scenes.json"))
    for scene in scenes:
        generate_video(scene, NoiseSpec(), str(root))
    return str(root)


@pytest.fixture()
def echo_plugin_cmd():
    import sys

    return (sys.executable, os.path.join(PLUGINS, "echo_propagator.py"))


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
