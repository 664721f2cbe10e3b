"""Gene panel, co-occurrence counting, and the co-occurrence embedding."""

import numpy as np
import pytest

from gliomol.autodiff import Tensor, reverse_grad
from gliomol.genomics import (
    MUTANT,
    UNKNOWN,
    WILDTYPE,
    EmbedTrainConfig,
    GeneEmbedding,
    GenePanel,
    LabelVector,
    MutationProfile,
    PanelError,
    build_cooccurrence,
    glove_loss,
    glove_weight,
    nearest_neighbor_tokens,
    read_mutation_csv,
    subgroup_cosine_report,
    train_gene_embedding,
)

from oracles import cooccurrence_brute, finite_difference_check, glove_loss_brute

PANEL = GenePanel(("IDH", "ATRX"))


def mp(pid, **calls):
    coded = {g: MUTANT if s == "mut" else WILDTYPE for g, s in calls.items()}
    return MutationProfile(pid, coded)


class TestPanel:
    def test_token_layout(self):
        assert PANEL.token("IDH", MUTANT) == 0
        assert PANEL.token("IDH", WILDTYPE) == 1
        assert PANEL.token("ATRX", MUTANT) == 2
        assert PANEL.n_tokens == 4

    def test_duplicate_genes_rejected(self):
        with pytest.raises(PanelError):
            GenePanel(("IDH", "IDH"))

    def test_unknown_gene_rejected(self):
        with pytest.raises(PanelError):
            PANEL.token("TERT", MUTANT)


class TestCooccurrence:
    def test_hand_counted_example(self):
        profiles = [mp("P1", IDH="mut", ATRX="mut"), mp("P2", IDH="wt", ATRX="wt")]
        x = build_cooccurrence(profiles, PANEL)
        idh_m, idh_w = PANEL.token("IDH", MUTANT), PANEL.token("IDH", WILDTYPE)
        atrx_m, atrx_w = PANEL.token("ATRX", MUTANT), PANEL.token("ATRX", WILDTYPE)
        assert x[idh_m, atrx_m] == 1
        assert x[idh_w, atrx_w] == 1
        assert x[idh_m, atrx_w] == 0

    def test_empty_call_sets_give_zero_matrix(self):
        profiles = [MutationProfile("P1", {}), MutationProfile("P2", {})]
        assert build_cooccurrence(profiles, PANEL).sum() == 0

    def test_duplicated_patient_doubles_counts(self):
        profiles = [mp("P1", IDH="mut", ATRX="wt")]
        once = build_cooccurrence(profiles, PANEL)
        twice = build_cooccurrence(profiles * 2, PANEL)
        np.testing.assert_array_equal(twice, 2 * once)

    def test_unknown_calls_contribute_nothing(self):
        full = build_cooccurrence([mp("P", IDH="mut", ATRX="mut")], PANEL)
        partial = build_cooccurrence([MutationProfile("P", {"IDH": MUTANT})], PANEL)
        assert full.sum() == 2
        assert partial.sum() == 0

    def test_structural_invariants_and_brute_force(self):
        rng = np.random.default_rng(0)
        panel = GenePanel(("A", "B", "C", "D"))
        profiles = []
        for i in range(40):
            calls = {}
            for g in panel.genes:
                r = rng.random()
                if r < 0.4:
                    calls[g] = MUTANT
                elif r < 0.8:
                    calls[g] = WILDTYPE
            profiles.append(MutationProfile(f"p{i}", calls))
        x = build_cooccurrence(profiles, panel)
        np.testing.assert_array_equal(x, x.T)
        assert np.diag(x).sum() == 0
        for i in range(panel.n_genes):
            assert x[2 * i, 2 * i + 1] == 0  # never both statuses in one tumor
        np.testing.assert_array_equal(x, cooccurrence_brute(profiles, panel))

    def test_profile_outside_panel_rejected(self):
        with pytest.raises(PanelError):
            build_cooccurrence([MutationProfile("P", {"TERT": MUTANT})], PANEL)

    def test_no_profiles_rejected(self):
        with pytest.raises(ValueError):
            build_cooccurrence([], PANEL)


class TestCsvIngestion:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "muts.csv"
        path.write_text(
            "patient_id,gene,status\nP1,IDH,mutant\nP1,ATRX,wildtype\nP2,IDH,wildtype\n"
        )
        profiles = read_mutation_csv(path, PANEL)
        assert {p.patient_id for p in profiles} == {"P1", "P2"}
        by_id = {p.patient_id: p.calls for p in profiles}
        assert by_id["P1"] == {"IDH": MUTANT, "ATRX": WILDTYPE}
        assert by_id["P2"] == {"IDH": WILDTYPE}  # ATRX stays unknown

    def test_bad_status_rejected(self, tmp_path):
        path = tmp_path / "muts.csv"
        path.write_text("patient_id,gene,status\nP1,IDH,amplified\n")
        with pytest.raises(PanelError):
            read_mutation_csv(path, PANEL)


class TestGloveWeight:
    def test_saturates_at_xmax(self):
        assert glove_weight(10, 10) == pytest.approx(1.0)
        assert glove_weight(25, 10) == pytest.approx(1.0)

    def test_zero_count_drops_out(self):
        assert glove_weight(0, 10) == 0.0

    def test_quarter_count(self):
        assert glove_weight(25, 100, alpha=0.75) == pytest.approx(0.25**0.75, rel=1e-12)
        assert glove_weight(25, 100, alpha=0.75) == pytest.approx(0.35355, abs=1e-4)

    def test_nonpositive_xmax_rejected(self):
        with pytest.raises(ValueError):
            glove_weight(1, 0)


class TestGloveLoss:
    def test_exact_factorization_gives_zero(self):
        # build X = exp(E E^T) off-diagonal so every residual vanishes
        rng = np.random.default_rng(2)
        e = rng.standard_normal((4, 3)) * 0.5
        dots = e @ e.T
        x = np.exp(dots)
        np.fill_diagonal(x, 0.0)
        loss = glove_loss(e, x)
        assert float(loss.data) == pytest.approx(0.0, abs=1e-18)

    def test_single_pair_at_eulers_number(self):
        e = np.zeros((2, 3))
        x = np.array([[0.0, np.e], [np.e, 0.0]])
        loss = glove_loss(e, x, x_max=np.e, alpha=0.75)
        # two ordered pairs, each weight 1 and residual (0 - 1)^2
        assert float(loss.data) == pytest.approx(2.0, rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(3, 7))
            e = rng.standard_normal((n, 4))
            x = rng.integers(0, 6, size=(n, n)).astype(np.float64)
            x = (x + x.T) / 1.0
            np.fill_diagonal(x, 0.0)
            x_max = max(float(x.max()), 1.0)
            ours = float(glove_loss(e, x, x_max=x_max, alpha=0.75).data)
            brute = glove_loss_brute(e, x, x_max, 0.75)
            assert ours == pytest.approx(brute, abs=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        e = Tensor(rng.standard_normal((5, 4)) * 0.5, requires_grad=True)
        x = rng.integers(0, 5, size=(5, 5)).astype(np.float64)
        x = x + x.T
        np.fill_diagonal(x, 0.0)

        def loss():
            return glove_loss(e, x, x_max=float(x.max()))

        assert finite_difference_check(loss, [e]) <= 1e-5


def block_matrix():
    """Two disjoint 3-token groups co-occurring heavily within themselves."""
    x = np.zeros((6, 6))
    for group in ([0, 1, 2], [3, 4, 5]):
        for i in group:
            for j in group:
                if i != j:
                    x[i, j] = 50.0
    return x


class TestEmbeddingTraining:
    def test_loss_improves_and_is_deterministic(self):
        panel = GenePanel(("A", "B", "C"))
        x = block_matrix()
        cfg = EmbedTrainConfig(dim=8, epochs=40, seed=5)
        emb1 = train_gene_embedding(x, panel, cfg)
        emb2 = train_gene_embedding(x, panel, cfg)
        np.testing.assert_array_equal(emb1.vectors, emb2.vectors)
        rng = np.random.default_rng(cfg.seed)
        init = rng.normal(0.0, 0.1, size=(panel.n_tokens, cfg.dim))
        assert float(glove_loss(emb1.vectors, x).data) < float(glove_loss(init, x).data)

    def test_rank_sufficient_toy_reaches_tiny_loss(self):
        panel = GenePanel(("A", "B"))  # 4 tokens; only 3 are counted below
        x = np.zeros((4, 4))
        x[0, 1] = x[1, 0] = 7.0
        x[1, 2] = x[2, 1] = 3.0
        x[0, 2] = x[2, 0] = 11.0
        emb = train_gene_embedding(x, panel, EmbedTrainConfig(dim=8, epochs=600, lr=0.05, seed=1))
        assert float(glove_loss(emb.vectors, x).data) < 1e-4

    def test_all_zero_matrix_rejected(self):
        with pytest.raises(ValueError):
            train_gene_embedding(np.zeros((4, 4)), GenePanel(("A", "B")))

    def test_block_structure_recovered(self):
        panel = GenePanel(("A", "B", "C"))
        x = block_matrix()
        emb = train_gene_embedding(x, panel, EmbedTrainConfig(dim=8, epochs=150, seed=3))
        groups = {"g1": [0, 1, 2], "g2": [3, 4, 5]}
        report = subgroup_cosine_report(emb, groups)
        for name in groups:
            assert report[name]["intra"] > report[name]["inter"]
        nn = nearest_neighbor_tokens(emb.vectors)
        for token, neighbor in enumerate(nn):
            same_block = (token < 3) == (neighbor < 3)
            assert same_block, f"token {token} nearest neighbor {neighbor} crosses blocks"


class TestCosineReport:
    def test_identical_vectors(self):
        panel = GenePanel(("A", "B"))
        emb = GeneEmbedding(np.ones((4, 3)), panel)
        rep = subgroup_cosine_report(emb, {"g": [0, 1]})
        assert rep["g"]["intra"] == pytest.approx(1.0)
        assert rep["g"]["inter"] == pytest.approx(1.0)

    def test_orthogonal_one_hots(self):
        panel = GenePanel(("A", "B"))
        emb = GeneEmbedding(np.eye(4), panel)
        rep = subgroup_cosine_report(emb, {"g": [0, 1]})
        assert rep["g"]["intra"] == pytest.approx(0.0)
        assert rep["g"]["inter"] == pytest.approx(0.0)

    def test_small_group_rejected(self):
        panel = GenePanel(("A", "B"))
        emb = GeneEmbedding(np.eye(4), panel)
        with pytest.raises(ValueError):
            subgroup_cosine_report(emb, {"g": [0]})


class TestLabelVector:
    def test_from_calls_marks_missing_as_unknown(self):
        panel = GenePanel(("IDH", "ATRX"))
        lv = LabelVector.from_calls(panel, {"IDH": MUTANT})
        assert lv.states[0] == MUTANT
        assert lv.states[1] == UNKNOWN

    def test_nonpositive_weights_rejected(self):
        with pytest.raises(ValueError):
            LabelVector(states=np.array([1, 0]), weights=np.array([1.0, 0.0]))


class TestEmbeddingIO:
    def test_save_load_roundtrip(self, tmp_path):
        panel = GenePanel(("A", "B"))
        emb = GeneEmbedding(np.random.default_rng(0).standard_normal((4, 5)), panel)
        emb.save(tmp_path / "emb")
        back = GeneEmbedding.load(tmp_path / "emb")
        np.testing.assert_array_equal(back.vectors, emb.vectors)
        assert back.panel.genes == panel.genes

    def test_label_matrix_picks_mutant_rows(self):
        panel = GenePanel(("A", "B"))
        vecs = np.arange(20).reshape(4, 5).astype(float)
        emb = GeneEmbedding(vecs, panel)
        np.testing.assert_array_equal(emb.label_matrix(), vecs[[0, 2]])
