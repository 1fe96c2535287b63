import random

import pytest

from prepatch import synth


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The full labelled corpus, built once per session."""
    root = tmp_path_factory.mktemp("corpus") / "apps"
    entries = synth.build_corpus(root)
    return root, entries


@pytest.fixture
def app_tree(tmp_path):
    """Factory writing one generated app to disk as an extracted tree."""
    def make(kind="s2", index=2, seed=5):
        files, truth = synth.build_app_files(kind, index, random.Random(seed))
        tree = tmp_path / truth.name
        synth.write_tree(files, tree)
        return tree, truth, files
    return make


@pytest.fixture
def app_files():
    """Factory returning one generated app as an in-memory file map."""
    def make(kind="s2", index=2, seed=5):
        return synth.build_app_files(kind, index, random.Random(seed))
    return make
