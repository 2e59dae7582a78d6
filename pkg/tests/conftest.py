"""
Pytest configuration and fixtures for surf-select tests.
"""
import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from surf_select.models.inputs import Family, GlmSpec
from surf_select.services.tree import parse_taxonomy

# Lineages of the six-OTU example tree: OTUs 1-3 under c1 (phylum p1),
# OTUs 4-5 under c2 and OTU 6 alone under c3 (both phylum p2).
FIGURE1_LINEAGES = ["k;p1;c1", "k;p1;c1", "k;p1;c1", "k;p2;c2", "k;p2;c2", "k;p2;c3"]
FIGURE1_OTUS = ["otu1", "otu2", "otu3", "otu4", "otu5", "otu6"]


@pytest.fixture
def rng():
    """Fresh seeded generator."""
    return np.random.default_rng(20240611)


@pytest.fixture
def settings():
    """Provide settings instance."""
    from surf_select.config import get_settings
    return get_settings()


@pytest.fixture
def figure1_tree():
    """Six-OTU, three-rank example taxonomy."""
    return parse_taxonomy(FIGURE1_LINEAGES, otu_ids=FIGURE1_OTUS, levels=["kingdom", "phylum", "class"])


@pytest.fixture
def gaussian():
    return GlmSpec(family=Family.GAUSSIAN)


@pytest.fixture
def binomial():
    return GlmSpec(family=Family.BINOMIAL)


@pytest.fixture
def poisson():
    return GlmSpec(family=Family.POISSON)


def make_single_signal(n: int = 100, p: int = 10, seed: int = 0, strength: float = 2.5):
    """Binary response driven by column 0 of an independent gaussian design."""
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    eta = -0.5 + strength * X[:, 0]
    y = gen.binomial(1, 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return X, y


@pytest.fixture
def single_signal():
    """(X, y) with one strong true variable (column 0)."""
    return make_single_signal()
