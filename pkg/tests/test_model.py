"""Network forward/backward, output heads, risk mapping, checkpoints."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binsurv.model import (
    ModelConfig, apply_head, backward, cat_head, cat_head_backward, forward,
    head_backward, init_params, load_checkpoint, mtlr_head, mtlr_head_backward,
    predict_risk, predict_survival, save_checkpoint,
)
from helpers import fd_input_grad, rel_err_arr


def small_config(head="cat", k_bins=5, dropout=0.0):
    return ModelConfig(input_dim=4, hidden_dim=8, n_blocks=2,
                       dropout_rate=dropout, head=head, k_bins=k_bins)


class TestInit:
    def test_shapes_and_constant_tensors(self):
        cfg = small_config()
        p = init_params(cfg, seed=0)
        assert p.tensors["input.w"].shape == (4, 8)
        assert p.tensors["output.w"].shape == (8, cfg.out_dim)
        for b in range(2):
            assert np.all(p.tensors[f"block{b}.bn.scale"] == 1.0)
            assert np.all(p.tensors[f"block{b}.bn.shift"] == 0.0)
            assert np.all(p.tensors[f"block{b}.bn.mean"] == 0.0)
            assert np.all(p.tensors[f"block{b}.bn.var"] == 1.0)
        assert np.all(p.tensors["input.b"] == 0.0)
        assert np.all(p.tensors["output.b"] == 0.0)

    def test_uniform_bounds_scale_with_fan_in(self):
        p = init_params(ModelConfig(input_dim=100, hidden_dim=8, n_blocks=1,
                                    k_bins=5), seed=1)
        w = p.tensors["input.w"]
        assert np.all(np.abs(w) <= 1.0 / np.sqrt(100))
        assert np.abs(w).max() > 0.5 / np.sqrt(100)  # not degenerate

    def test_deterministic_by_seed(self):
        a = init_params(small_config(), seed=7)
        b = init_params(small_config(), seed=7)
        c = init_params(small_config(), seed=8)
        assert np.array_equal(a.tensors["input.w"], b.tensors["input.w"])
        assert not np.array_equal(a.tensors["input.w"], c.tensors["input.w"])

    def test_running_stats_not_trainable(self):
        p = init_params(small_config(), seed=0)
        names = p.trainable_names()
        assert all(".mean" not in n and ".var" not in n for n in names)
        assert "block0.bn.scale" in names


class TestHeads:
    def test_cat_rows_are_distributions(self, rng):
        pmf = cat_head(rng.standard_normal((50, 7)) * 5)
        assert np.all(pmf >= 0)
        assert np.allclose(pmf.sum(axis=1), 1.0, atol=1e-12)

    def test_mtlr_rows_are_distributions(self, rng):
        pmf = mtlr_head(rng.standard_normal((50, 6)) * 5)
        assert pmf.shape == (50, 7)
        assert np.all(pmf >= 0)
        assert np.allclose(pmf.sum(axis=1), 1.0, atol=1e-12)

    def test_mtlr_two_bins_zero_logit_is_uniform(self):
        pmf = mtlr_head(np.array([[0.0]]))
        assert np.allclose(pmf, [[0.5, 0.5]], atol=1e-12)

    def test_mtlr_three_bins_zero_logits_uniform(self):
        pmf = mtlr_head(np.zeros((1, 2)))
        assert np.allclose(pmf, 1.0 / 3.0, atol=1e-12)

    def test_mtlr_known_ratio(self):
        # suffix sums [log 3], appended zero: softmax gives (3/4, 1/4)
        pmf = mtlr_head(np.array([[np.log(3.0)]]))
        assert np.allclose(pmf, [[0.75, 0.25]], atol=1e-12)

    def test_cat_invariant_to_logit_shift(self, rng):
        z = rng.standard_normal((10, 5))
        assert np.allclose(cat_head(z), cat_head(z + 100.0), atol=1e-12)

    def test_heads_reject_nonfinite(self):
        with pytest.raises(ValueError):
            cat_head(np.array([[np.nan, 0.0]]))
        with pytest.raises(ValueError):
            mtlr_head(np.array([[np.inf]]))

    @given(st.integers(0, 2 ** 31 - 1), st.integers(2, 12))
    @settings(max_examples=80, deadline=None)
    def test_property_valid_pmf_both_heads(self, seed, k):
        z = np.random.default_rng(seed).standard_normal((8, k)) * 10
        for pmf in (cat_head(z), mtlr_head(z)):
            assert np.all(pmf >= 0)
            assert np.allclose(pmf.sum(axis=1), 1.0, atol=1e-9)

    def test_cat_jacobian_matches_finite_differences(self, rng):
        z = rng.standard_normal((3, 6))
        c = rng.standard_normal((3, 6))
        pmf = cat_head(z)
        analytic = cat_head_backward(pmf, c)
        numeric = fd_input_grad(lambda zz: float((cat_head(zz) * c).sum()), z)
        assert rel_err_arr(analytic, numeric, floor=1e-4) < 1e-6

    def test_mtlr_jacobian_matches_finite_differences(self, rng):
        phi = rng.standard_normal((3, 5))
        c = rng.standard_normal((3, 6))
        pmf = mtlr_head(phi)
        analytic = mtlr_head_backward(pmf, c)
        numeric = fd_input_grad(lambda p: float((mtlr_head(p) * c).sum()), phi)
        assert rel_err_arr(analytic, numeric, floor=1e-4) < 1e-6

    def test_dispatch(self, rng):
        z = rng.standard_normal((4, 5))
        assert np.array_equal(apply_head("cat", z), cat_head(z))
        assert np.array_equal(apply_head("mtlr", z), mtlr_head(z))
        with pytest.raises(ValueError):
            apply_head("linear", z)


class TestRisk:
    def test_one_hot_extremes(self):
        k = 8
        first = np.zeros((1, k)); first[0, 0] = 1.0
        last = np.zeros((1, k)); last[0, -1] = 1.0
        assert predict_risk(first)[0] == pytest.approx(1.0 - 1.0 / (2 * k))
        assert predict_risk(last)[0] == pytest.approx(1.0 / (2 * k))

    def test_bounds_on_random_pmfs(self, rng):
        k = 6
        pmf = cat_head(rng.standard_normal((500, k)) * 8)
        r = predict_risk(pmf)
        assert np.all(r >= 1.0 / (2 * k) - 1e-12)
        assert np.all(r <= 1.0 - 1.0 / (2 * k) + 1e-12)

    def test_mass_in_earlier_bins_raises_risk(self):
        a = np.array([[0.8, 0.1, 0.1]])
        b = np.array([[0.1, 0.1, 0.8]])
        assert predict_risk(a)[0] > predict_risk(b)[0]

    def test_survival_is_complement_of_cdf(self):
        pmf = np.array([[0.2, 0.3, 0.5]])
        assert predict_survival(pmf, 1)[0] == pytest.approx(0.8)
        assert predict_survival(pmf, 2)[0] == pytest.approx(0.5)
        assert predict_survival(pmf, 3)[0] == pytest.approx(0.0)

    def test_survival_clipped_to_unit_interval(self):
        # float round-off in the cdf must not leak outside [0, 1]
        pmf = np.array([[0.1 + 1e-17, 0.9]])
        s = predict_survival(pmf, 2)
        assert np.all((s >= 0.0) & (s <= 1.0))


class TestForward:
    def test_eval_is_pure_and_train_updates_stats(self, rng):
        cfg = small_config()
        p = init_params(cfg, seed=0)
        x = rng.standard_normal((16, 4))
        before = p.tensors["block0.bn.mean"].copy()
        logits_eval, cache = forward(p, x, mode="eval")
        assert cache is None
        assert np.array_equal(p.tensors["block0.bn.mean"], before)
        assert p.updates == 0
        forward(p, x, mode="train")
        assert p.updates == 1
        assert not np.array_equal(p.tensors["block0.bn.mean"], before)

    def test_train_needs_two_samples(self, rng):
        p = init_params(small_config(), seed=0)
        with pytest.raises(ValueError):
            forward(p, rng.standard_normal((1, 4)), mode="train")
        logits, _ = forward(p, rng.standard_normal((1, 4)), mode="eval")
        assert logits.shape == (1, 5)

    def test_dropout_needs_seed_and_is_deterministic(self, rng):
        cfg = small_config(dropout=0.5)
        p = init_params(cfg, seed=0)
        x = rng.standard_normal((32, 4))
        with pytest.raises(ValueError):
            forward(p, x, mode="train")
        a, _ = forward(p, x, mode="train", seed=(1, 2))
        b, _ = forward(p, x, mode="train", seed=(1, 2))
        c, _ = forward(p, x, mode="train", seed=(1, 3))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_eval_matches_train_after_stats_converge(self, rng):
        # repeated train passes drive the running statistics to the batch
        # statistics; eval on the same batch must then reproduce train logits
        cfg = small_config(dropout=0.0)
        p = init_params(cfg, seed=3)
        x = rng.standard_normal((64, 4))
        for _ in range(600):
            train_logits, _ = forward(p, x, mode="train")
        eval_logits, _ = forward(p, x, mode="eval")
        assert np.allclose(eval_logits, train_logits, atol=1e-6)

    def test_rejects_wrong_width(self, rng):
        p = init_params(small_config(), seed=0)
        with pytest.raises(ValueError):
            forward(p, rng.standard_normal((8, 3)), mode="eval")


class TestBackward:
    def loss_and_grads(self, p, x, c, seed=None):
        logits, cache = forward(p, x, mode="train", seed=seed)
        return float((logits * c).sum()), backward(p, cache, c)

    def test_matches_finite_differences(self, rng):
        cfg = small_config(dropout=0.0)
        p = init_params(cfg, seed=5)
        x = rng.standard_normal((12, 4))
        c = rng.standard_normal((12, cfg.out_dim))
        _, analytic = self.loss_and_grads(p, x, c)
        h = 1e-5
        worst = 0.0
        for name in p.trainable_names():
            w = p.tensors[name]
            it = np.nditer(w, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = w[idx]
                w[idx] = orig + h
                up, _ = self.loss_and_grads(p, x, c)
                w[idx] = orig - h
                dn, _ = self.loss_and_grads(p, x, c)
                w[idx] = orig
                num = (up - dn) / (2 * h)
                denom = max(abs(num), abs(analytic[name][idx]), 1e-4)
                worst = max(worst, abs(num - analytic[name][idx]) / denom)
        assert worst < 1e-6

    def test_duplicated_rows_still_check_out(self, rng):
        # repeated inputs stress the batch-statistics backward path
        cfg = ModelConfig(input_dim=3, hidden_dim=4, n_blocks=1,
                          dropout_rate=0.0, head="cat", k_bins=4)
        p = init_params(cfg, seed=2)
        base = rng.standard_normal((4, 3))
        x = np.vstack([base, base])
        c = rng.standard_normal((8, 4))
        _, analytic = self.loss_and_grads(p, x, c)
        h = 1e-5
        for name in ("block0.linear.w", "input.w", "block0.bn.scale"):
            w = p.tensors[name]
            it = np.nditer(w, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = w[idx]
                w[idx] = orig + h
                up, _ = self.loss_and_grads(p, x, c)
                w[idx] = orig - h
                dn, _ = self.loss_and_grads(p, x, c)
                w[idx] = orig
                num = (up - dn) / (2 * h)
                denom = max(abs(num), abs(analytic[name][idx]), 1e-4)
                assert abs(num - analytic[name][idx]) / denom < 1e-5

    def test_dropout_masks_flow_through_backward(self, rng):
        cfg = small_config(dropout=0.4)
        p = init_params(cfg, seed=1)
        x = rng.standard_normal((16, 4))
        c = rng.standard_normal((16, cfg.out_dim))
        _, analytic = self.loss_and_grads(p, x, c, seed=(0, 0))
        h = 1e-5
        name = "output.w"
        w = p.tensors[name]
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up, _ = self.loss_and_grads(p, x, c, seed=(0, 0))
            w[idx] = orig - h
            dn, _ = self.loss_and_grads(p, x, c, seed=(0, 0))
            w[idx] = orig
            num = (up - dn) / (2 * h)
            denom = max(abs(num), abs(analytic[name][idx]), 1e-4)
            assert abs(num - analytic[name][idx]) / denom < 1e-5


class TestCheckpoint:
    def test_round_trip_identity(self, tmp_path, rng):
        cfg = small_config(head="mtlr")
        p = init_params(cfg, seed=4)
        forward(p, rng.standard_normal((8, 4)), mode="train")
        path = tmp_path / "model.json"
        save_checkpoint(path, p, meta={"cutoff": 0.25, "note": "x"})
        back, meta = load_checkpoint(path)
        assert meta["cutoff"] == 0.25
        assert back.config == p.config
        assert back.updates == p.updates
        for name, tensor in p.tensors.items():
            assert np.array_equal(back.tensors[name], tensor), name

    def test_rewrites_are_byte_identical(self, tmp_path, rng):
        p = init_params(small_config(), seed=4)
        forward(p, rng.standard_normal((8, 4)), mode="train")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(a, p, meta={"k": 1})
        save_checkpoint(b, p, meta={"k": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "other"}', encoding="utf-8")
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestConfigValidation:
    def test_rejects_unknown_head(self):
        with pytest.raises(ValueError):
            ModelConfig(input_dim=3, head="cox")

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            ModelConfig(input_dim=0)
        with pytest.raises(ValueError):
            ModelConfig(input_dim=3, k_bins=1)
        with pytest.raises(ValueError):
            ModelConfig(input_dim=3, dropout_rate=1.0)

    def test_out_dim_by_head(self):
        assert ModelConfig(input_dim=3, k_bins=9, head="cat").out_dim == 9
        assert ModelConfig(input_dim=3, k_bins=9, head="mtlr").out_dim == 8
