"""
Tests for taxonomy parsing, augmented designs and parsimonious representations.
"""
import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st
from scipy.optimize import linprog

from surf_select.services.tree import (
    TaxonomyTree,
    build_augmented_design,
    clustering_matrix,
    map_selection_to_leaves,
    parse_taxonomy,
    parsimonious_representation,
    penalty,
    read_taxonomy,
)
from surf_select.utils import TaxonomyError

BETA = np.array([1.0, 2.0, 2.5, -2.0, -1.0, -0.5])
BETA_PRIME = np.array([2.0, 2.0, 2.5, -2.0, -1.0, -0.5])

# Node labels in the order X7, X8, X9, X10, X11 of the worked example
EXAMPLE_INTERNAL = ["k;p1;c1", "k;p2;c2", "k;p2", "k;p1", "k"]


def _example_alpha(coefs, tree):
    """Leaf coefficients followed by X7..X11, read off by label."""
    by_label = coefs.by_label()
    leaves = [by_label[otu] for otu in tree.otu_ids]
    return np.array(leaves + [by_label[label] for label in EXAMPLE_INTERNAL])


def _lp_minimum(beta, tree):
    """Minimal L1 norm over all node coefficients whose root-path sums equal beta."""
    n_nodes = len(tree.nodes)
    M = np.zeros((tree.n_leaves, n_nodes))
    for i, leaf in enumerate(tree.leaf_nodes):
        M[i, tree.path_to_root(leaf)] = 1.0
    result = linprog(
        c=np.ones(2 * n_nodes),
        A_eq=np.hstack([M, -M]),
        b_eq=beta,
        bounds=[(0, None)] * (2 * n_nodes),
        method="highs",
    )
    assert result.success
    return result.fun


@st.composite
def trees_and_betas(draw):
    n = draw(st.integers(min_value=1, max_value=12))
    lineages = []
    for _ in range(n):
        a = draw(st.integers(min_value=0, max_value=2))
        b = draw(st.integers(min_value=0, max_value=2))
        lineages.append(f"k;p{a};c{a}_{b}")
    beta = np.array(draw(st.lists(st.integers(min_value=-12, max_value=12), min_size=n, max_size=n)), dtype=float) / 4
    return parse_taxonomy(lineages), beta


class TestParseTaxonomy:
    """Tests for lineage parsing."""

    def test_prefix_sharing(self):
        """Shared prefixes share nodes; distinct classes stay distinct."""
        tree = parse_taxonomy(["B;Firmicutes;Bacilli", "B;Firmicutes;Clostridia"], otu_ids=["a", "b"])
        kingdom = tree.node_by_label("B")
        phylum = tree.node_by_label("B;Firmicutes")
        assert tree.root == kingdom.id
        assert phylum.parent == kingdom.id
        assert len(phylum.children) == 2

    def test_single_otu_chain(self):
        """One OTU gives a chain ending in a single leaf."""
        tree = parse_taxonomy(["k;p;c"], otu_ids=["x"])
        assert tree.n_leaves == 1
        assert all(len(n.children) <= 1 for n in tree.nodes)

    def test_example_shape(self, figure1_tree):
        """Six leaves under three classes, two phyla and one kingdom."""
        assert figure1_tree.n_leaves == 6
        assert figure1_tree.nodes[figure1_tree.root].label == "k"
        assert figure1_tree.leaves_under(figure1_tree.node_by_label("k;p2").id).tolist() == [3, 4, 5]
        assert figure1_tree.leaves_under(figure1_tree.node_by_label("k;p1;c1").id).tolist() == [0, 1, 2]

    def test_inconsistent_ranks(self):
        """Lineages with a different rank count are reported."""
        with pytest.raises(TaxonomyError) as exc:
            parse_taxonomy(["k;p;c", "k;p;c", "k;p"], otu_ids=["a", "b", "c"])
        assert exc.value.details["offending"] == ["c"]

    def test_empty_rank_is_unnamed(self):
        """Empty segments become unnamed pass-through nodes."""
        tree = parse_taxonomy(["k;;c1", "k;;c2"], otu_ids=["a", "b"])
        assert tree.node_by_label("k;").unnamed

    def test_several_tops_get_root(self):
        """Two kingdoms hang under a synthetic root."""
        tree = parse_taxonomy(["A;p", "B;p"], otu_ids=["a", "b"])
        assert tree.nodes[tree.root].label == "root"

    def test_read_taxonomy(self, tmp_path):
        """TSV with otu_id and lineage columns."""
        path = tmp_path / "taxonomy.tsv"
        path.write_text("otu_id\tlineage\nx\tk;p1\ny\tk;p2\n")
        tree = read_taxonomy(str(path))
        assert tree.otu_ids == ["x", "y"]

    def test_clustering_matrix(self, figure1_tree):
        """Class-level membership matrix."""
        C = clustering_matrix(figure1_tree, "class")
        assert C.cluster_labels == ["k;p1;c1", "k;p2;c2", "k;p2;c3"]
        np.testing.assert_array_equal(C.entries.sum(axis=0), [3, 2, 1])


class TestAugmentedDesign:
    """Tests for build_augmented_design."""

    def test_example_has_ten_columns(self, figure1_tree, rng):
        """The single-class phylum duplicates its class and is dropped."""
        X = rng.integers(0, 20, size=(8, 6)).astype(float)
        design = build_augmented_design(X, figure1_tree)
        assert design.matrix.shape == (8, 10)
        assert design.labels[6:] == ["k;p1;c1", "k;p2;c2", "k;p2", "k"]
        dropped = [figure1_tree.nodes[v].label for v in design.dropped]
        assert "k;p1" in dropped
        assert design.duplicate_of[figure1_tree.node_by_label("k;p1").id] == 6
        np.testing.assert_array_equal(design.matrix[:, 6], X[:, :3].sum(axis=1))
        np.testing.assert_array_equal(design.matrix[:, 9], X.sum(axis=1))

    def test_star_tree(self, rng):
        """A leaf-only tree adds one root column of row sums."""
        X = rng.random((5, 3))
        design = build_augmented_design(X, TaxonomyTree.star(["a", "b", "c"]))
        assert design.matrix.shape == (5, 4)
        np.testing.assert_allclose(design.matrix[:, 3], X.sum(axis=1))

    def test_passthrough_appended(self, figure1_tree, rng):
        """Covariates follow the tree columns unaggregated."""
        X = rng.random((6, 6))
        extra = rng.random((6, 2))
        design = build_augmented_design(X, figure1_tree, passthrough=extra, passthrough_names=["age", "abx"])
        assert design.labels[-2:] == ["age", "abx"]
        assert design.column_nodes[-1] is None
        assert design.n_tree_columns == 10

    def test_transform_new_rows(self, figure1_tree, rng):
        """New rows get the same columns."""
        X = rng.random((6, 6))
        design = build_augmented_design(X, figure1_tree)
        np.testing.assert_allclose(design.transform(X), design.matrix)

    def test_column_mismatch(self, figure1_tree):
        """Columns must match the leaves."""
        with pytest.raises(TaxonomyError):
            build_augmented_design(np.ones((3, 5)), figure1_tree)


class TestParsimoniousRepresentation:
    """Tests for the minimal-L1 tree coefficients."""

    def test_worked_example(self, figure1_tree):
        """beta gives alpha = (0, 1, 1.5, -1, 0, 0, 1, -0.5, -0.5, 0, 0) with penalty 5.5."""
        coefs = parsimonious_representation(BETA, figure1_tree)
        np.testing.assert_allclose(
            _example_alpha(coefs, figure1_tree),
            [0, 1, 1.5, -1, 0, 0, 1, -0.5, -0.5, 0, 0],
            atol=1e-12,
        )
        assert penalty(coefs) == pytest.approx(5.5, abs=1e-12)
        assert np.sum(np.abs(BETA)) == pytest.approx(9.0)

    def test_worked_example_prime(self, figure1_tree):
        """beta' gives alpha' = (0, 0, 0.5, -1, 0, 0, 2, -0.5, -0.5, 0, 0) with penalty 4.5."""
        coefs = parsimonious_representation(BETA_PRIME, figure1_tree)
        np.testing.assert_allclose(
            _example_alpha(coefs, figure1_tree),
            [0, 0, 0.5, -1, 0, 0, 2, -0.5, -0.5, 0, 0],
            atol=1e-12,
        )
        assert penalty(coefs) == pytest.approx(4.5, abs=1e-12)
        assert np.sum(np.abs(BETA_PRIME)) == pytest.approx(10.0)

    def test_zero_beta(self, figure1_tree):
        """Zero leaves give zero coefficients."""
        coefs = parsimonious_representation(np.zeros(6), figure1_tree)
        assert penalty(coefs) == 0.0

    def test_single_pass_is_not_always_optimal(self):
        """The one-pass median rule can exceed the optimum."""
        tree = parse_taxonomy(["k;A", "k;A", "k;B", "k;C", "k;D"], otu_ids=list("abcde"))
        beta = np.array([1.0, 2.0, 5.0, 5.0, 5.0])
        exact = parsimonious_representation(beta, tree)
        single = parsimonious_representation(beta, tree, method="single_pass")
        np.testing.assert_array_equal(single.implied_beta, beta)
        assert penalty(exact) < penalty(single)
        assert penalty(exact) == pytest.approx(_lp_minimum(beta, tree))

    def test_unknown_method(self, figure1_tree):
        with pytest.raises(ValueError):
            parsimonious_representation(BETA, figure1_tree, method="greedy")

    def test_non_finite_beta(self, figure1_tree):
        with pytest.raises(TaxonomyError):
            parsimonious_representation([np.nan, 0, 0, 0, 0, 0], figure1_tree)

    @hyp_settings(max_examples=60, deadline=None)
    @given(trees_and_betas())
    def test_round_trip_exact(self, case):
        """Root-path sums reproduce beta exactly."""
        tree, beta = case
        coefs = parsimonious_representation(beta, tree)
        np.testing.assert_array_equal(coefs.implied_beta, beta)

    @hyp_settings(max_examples=60, deadline=None)
    @given(trees_and_betas())
    def test_matches_lp_optimum(self, case):
        """The two-pass rule attains the linear-programming minimum."""
        tree, beta = case
        coefs = parsimonious_representation(beta, tree)
        assert penalty(coefs) == pytest.approx(_lp_minimum(beta, tree), abs=1e-7)
        assert penalty(coefs) <= np.sum(np.abs(beta)) + 1e-12

    def test_dominates_random_alternatives(self, figure1_tree, rng):
        """No random representation of the same beta has a smaller penalty."""
        coefs = parsimonious_representation(BETA, figure1_tree)
        internal = [n.id for n in figure1_tree.nodes if not n.is_leaf]
        for _ in range(1000):
            alpha = np.zeros(len(figure1_tree.nodes))
            alpha[internal] = rng.normal(0, 2, len(internal))
            for i, leaf in enumerate(figure1_tree.leaf_nodes):
                above = sum(alpha[v] for v in figure1_tree.path_to_root(leaf)[1:])
                alpha[leaf] = BETA[i] - above
            assert penalty(coefs) <= penalty(alpha) + 1e-12


class TestMapSelectionToLeaves:
    """Tests for leaf-level reporting of augmented selections."""

    def test_class_column(self, figure1_tree, rng):
        """Selecting a class gives its OTUs the same coefficient."""
        design = build_augmented_design(rng.random((6, 6)), figure1_tree)
        report = map_selection_to_leaves([6], [0.7], design)
        np.testing.assert_allclose(report.leaf_coefficients, [0.7, 0.7, 0.7, 0, 0, 0])
        assert len(report.constraints) == 1
        assert "otu1, otu2, otu3" in report.constraints[0]

    def test_additive(self, figure1_tree, rng):
        """A leaf and its class add up."""
        design = build_augmented_design(rng.random((6, 6)), figure1_tree)
        report = map_selection_to_leaves([6, 1], [0.7, 0.2], design)
        np.testing.assert_allclose(report.leaf_coefficients, [0.7, 0.9, 0.7, 0, 0, 0])

    def test_full_representation_round_trip(self, figure1_tree, rng):
        """All columns with the parsimonious values map back to beta."""
        design = build_augmented_design(rng.random((6, 6)), figure1_tree)
        values = parsimonious_representation(BETA, figure1_tree).on_design(design)
        report = map_selection_to_leaves(range(len(values)), values, design)
        np.testing.assert_allclose(report.leaf_coefficients, BETA, atol=1e-12)
