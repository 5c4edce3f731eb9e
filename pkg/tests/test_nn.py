"""Engine-level checks: gradients, determinism, data plumbing, cross-module oracle."""

import gzip
import struct

import numpy as np
import pytest

from xbarlab.cells import FormingStrategy, form_pairs, pair_deviations, pair_state_array
from xbarlab.crossbar import mac, map_weights
from xbarlab.defects import DefectModel, config_from_pairs, sample_config
from xbarlab.device import DeviceParams
from xbarlab.nn import (
    Dense,
    TrainingDiverged,
    TrainSpec,
    build_mlp,
    build_surrogate_cnn,
    evaluate,
    load_checkpoint,
    load_dataset,
    lr_at,
    make_blobs,
    make_glyphs,
    read_idx,
    save_checkpoint,
    softmax_cross_entropy,
    train,
)
from xbarlab.nn.data import IDX_MAGIC_IMAGES, IDX_MAGIC_LABELS, load_mnist
from xbarlab.quantize import QuantSpec


class TestLrSchedule:
    SCHEDULE = ((80, 0.1), (120, 0.01), (180, 0.005))

    def test_boundaries(self):
        assert lr_at(self.SCHEDULE, 0) == 0.1
        assert lr_at(self.SCHEDULE, 150) == 0.01
        assert lr_at(self.SCHEDULE, 190) == 0.005
        assert lr_at(self.SCHEDULE, 80) == 0.1
        assert lr_at(self.SCHEDULE, 120) == 0.01

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainSpec(lr_schedule=((10, 0.1), (5, 0.01)))
        with pytest.raises(ValueError):
            TrainSpec(lr_schedule=((0, -0.1),))
        with pytest.raises(ValueError):
            lr_at((), 0)


class TestForwardBasics:
    def test_single_dense_symmetry(self):
        layer = Dense(2, 1, np.random.default_rng(0), dtype=np.float64)
        layer.w[...] = [[0.5, -0.5]]
        layer.b[...] = 0.0
        out = layer.forward(np.array([[1.0, 1.0]]))
        assert out[0, 0] == 0.0

    def test_shape_mismatch_raises(self):
        net = build_mlp(0, [4, 3])
        with pytest.raises(ValueError):
            net.forward(np.ones((2, 5)))

    def test_full_precision_degenerate_mode(self):
        net = build_mlp(0, [4, 8, 3], qspec=None)
        out = net.forward(np.random.default_rng(1).normal(size=(5, 4)))
        assert out.shape == (5, 3)

    def test_master_weights_untouched_by_defects(self):
        net = build_mlp(3, [6, 5, 4], qspec=QuantSpec(), dtype=np.float64)
        before = [l.w.copy() for l in net.crossbar_layers()]
        configs = [sample_config(s, DefectModel.plus_minus_only(0.5), seed=i)
                   for i, s in enumerate(net.weight_shapes())]
        net.forward(np.random.default_rng(2).normal(size=(4, 6)), configs=configs)
        for w0, layer in zip(before, net.crossbar_layers()):
            assert np.array_equal(w0, layer.w)


def _identity_rint(monkeypatch):
    monkeypatch.setattr(np, "rint", lambda x: np.asarray(x))


class TestGradients:
    def _fd_check(self, net, x, y, params, rel=1e-4, h=1e-6, skip=()):
        loss, grad = softmax_cross_entropy(net.forward(x, train=True), y)
        net.zero_grads()
        net.backward(grad)
        for name, value, gval, _ in params:
            flat_v = value.reshape(-1)
            flat_g = gval.reshape(-1)
            for i in range(flat_v.size):
                if (name, i) in skip:
                    continue
                keep = flat_v[i]
                flat_v[i] = keep + h
                lp, _ = softmax_cross_entropy(net.forward(x, train=True), y)
                flat_v[i] = keep - h
                lm, _ = softmax_cross_entropy(net.forward(x, train=True), y)
                flat_v[i] = keep
                fd = (lp - lm) / (2 * h)
                assert flat_g[i] == pytest.approx(fd, rel=rel, abs=5e-7), (name, i)

    def test_full_network_matches_finite_difference(self, monkeypatch):
        # rounding treated as identity: the straight-through surrogate network
        _identity_rint(monkeypatch)
        rng = np.random.default_rng(3)
        net = build_mlp(7, [5, 6, 4], qspec=QuantSpec(), dtype=np.float64,
                        activation="pact")
        for layer in net.layers:
            if hasattr(layer, "alpha"):
                layer.alpha[...] = 0.8
                layer.alpha_decay = 0.0
        x = rng.normal(size=(8, 5))
        y = rng.integers(0, 4, size=8)
        self._fd_check(net, x, y, net.params())

    def test_conv_bn_pool_gradients(self, monkeypatch):
        _identity_rint(monkeypatch)
        rng = np.random.default_rng(5)
        net = build_surrogate_cnn(seed=4, qspec=QuantSpec(), in_shape=(1, 8, 8),
                                  channels=(2, 3), hidden=6, dtype=np.float64)
        for layer in net.layers:
            if hasattr(layer, "alpha"):
                layer.alpha[...] = 1.1
                layer.alpha_decay = 0.0
        x = rng.uniform(0, 1, size=(4, 1, 8, 8))
        y = rng.integers(0, 10, size=4)
        params = [p for p in net.params() if p[0].endswith((".w", ".alpha"))]
        # spot-check a subset of each tensor to keep the FD loop tractable
        loss, grad = softmax_cross_entropy(net.forward(x, train=True), y)
        net.zero_grads()
        net.backward(grad)
        h = 1e-6
        for name, value, gval, _ in params:
            flat_v, flat_g = value.reshape(-1), gval.reshape(-1)
            picks = np.linspace(0, flat_v.size - 1, min(6, flat_v.size)).astype(int)
            for i in picks:
                keep = flat_v[i]
                flat_v[i] = keep + h
                lp, _ = softmax_cross_entropy(net.forward(x, train=True), y)
                flat_v[i] = keep - h
                lm, _ = softmax_cross_entropy(net.forward(x, train=True), y)
                flat_v[i] = keep
                fd = (lp - lm) / (2 * h)
                assert flat_g[i] == pytest.approx(fd, rel=2e-4, abs=1e-6), (name, i)

    def test_frozen_defects_ste_gradient(self, monkeypatch):
        # straight-through mode: at non-defective positions (away from the
        # squash-scale argmax) the backward pass equals the finite difference
        # of the defective surrogate forward
        _identity_rint(monkeypatch)
        rng = np.random.default_rng(11)
        net = build_mlp(13, [5, 4], qspec=QuantSpec(), dtype=np.float64)
        layer = net.crossbar_layers()[0]
        cfg = sample_config(layer.w.shape, DefectModel.plus_minus_only(0.3), seed=5)
        x = rng.normal(size=(6, 5))
        y = rng.integers(0, 4, size=6)
        net.set_defects([cfg], "table")
        loss, grad = softmax_cross_entropy(net.forward(x, train=True), y)
        net.zero_grads()
        net.backward(grad)
        defective = np.zeros(layer.w.size, dtype=bool)
        defective[cfg.idx] = True
        argmax = np.argmax(np.abs(np.tanh(layer.w)))
        flat_v = layer.w.reshape(-1)
        flat_g = layer.gw.reshape(-1)
        h = 1e-6
        for i in range(flat_v.size):
            if defective[i] or i == argmax:
                continue
            keep = flat_v[i]
            flat_v[i] = keep + h
            lp, _ = softmax_cross_entropy(net.forward(x, train=True), y)
            flat_v[i] = keep - h
            lm, _ = softmax_cross_entropy(net.forward(x, train=True), y)
            flat_v[i] = keep
            fd = (lp - lm) / (2 * h)
            assert flat_g[i] == pytest.approx(fd, rel=1e-4, abs=1e-8), i

    def test_mask_mode_zeroes_defective_gradients(self):
        rng = np.random.default_rng(13)
        net = build_mlp(17, [5, 4], qspec=QuantSpec(), dtype=np.float64, grad_mode="mask")
        layer = net.crossbar_layers()[0]
        cfg = sample_config(layer.w.shape, DefectModel.plus_minus_only(0.4), seed=3)
        net.set_defects([cfg], "table")
        loss, grad = softmax_cross_entropy(
            net.forward(rng.normal(size=(6, 5)), train=True), rng.integers(0, 4, 6))
        net.zero_grads()
        net.backward(grad)
        gmask = layer.gw.reshape(-1)[cfg.idx]
        assert np.all(gmask == 0.0)


class TestTraining:
    def test_blobs_sanity(self):
        x, y = make_blobs(1500, dim=12, classes=3, seed=5)
        net = build_mlp(1, [12, 24, 3], dtype=np.float64)
        spec = TrainSpec(epochs=40, batch_size=100, lr_schedule=((0, 0.05),),
                         weight_decay=0.0, seed=2)
        hist = train(net, (x, y), spec)
        assert hist[-1]["train_error"] <= 0.01

    def test_loss_decreases_first_steps(self):
        x, y = make_blobs(600, dim=10, classes=3, seed=7)
        net = build_mlp(2, [10, 16, 3], dtype=np.float64)
        spec = TrainSpec(epochs=10, batch_size=600, lr_schedule=((0, 0.01),),
                         weight_decay=0.0, seed=3)
        hist = train(net, (x, y), spec)
        losses = [h["train_loss"] for h in hist]
        assert losses[-1] < losses[0]

    def test_bit_identical_history(self):
        x, y = make_blobs(800, dim=8, classes=3, seed=9)
        model = DefectModel.combined(0.02, 0.02, FormingStrategy.B)
        spec = TrainSpec(epochs=3, batch_size=80, lr_schedule=((0, 0.05),),
                         defect_model=model, seed=21)
        h1 = train(build_mlp(5, [8, 12, 3], qspec=QuantSpec(), dtype=np.float64), (x, y), spec)
        h2 = train(build_mlp(5, [8, 12, 3], qspec=QuantSpec(), dtype=np.float64), (x, y), spec)
        assert h1 == h2

    def test_divergence_diagnostic(self):
        x, y = make_blobs(100, dim=4, classes=2, seed=11)
        net = build_mlp(6, [4, 2], dtype=np.float64)
        net.crossbar_layers()[0].w[0, 0] = np.inf
        spec = TrainSpec(epochs=1, batch_size=50, lr_schedule=((0, 0.01),), seed=1)
        with pytest.raises(TrainingDiverged):
            train(net, (x, y), spec)

    def test_per_sample_regeneration_runs(self):
        x, y = make_blobs(60, dim=6, classes=2, seed=13)
        model = DefectModel.plus_minus_only(0.05)
        net = build_mlp(7, [6, 8, 2], qspec=QuantSpec(), dtype=np.float64)
        spec = TrainSpec(epochs=1, batch_size=20, lr_schedule=((0, 0.01),),
                         defect_model=model, regen="per_sample", seed=5)
        hist = train(net, (x, y), spec)
        assert np.isfinite(hist[-1]["train_loss"])

    def test_evaluate_clean_equals_forward_error(self):
        x, y = make_blobs(400, dim=8, classes=3, seed=15)
        net = build_mlp(8, [8, 10, 3], dtype=np.float64)
        res = evaluate(net, (x, y), DefectModel.none(), n_configs=1)
        assert res.mean == net.error_rate(x, y)
        assert res.std == 0.0

    def test_evaluate_statistics_recompute(self):
        x, y = make_blobs(300, dim=8, classes=3, seed=17)
        net = build_mlp(9, [8, 10, 3], qspec=QuantSpec(), dtype=np.float64)
        res = evaluate(net, (x, y), DefectModel.plus_minus_only(0.1), n_configs=9,
                       base_seed=4)
        arr = np.array(res.errors)
        assert res.mean == pytest.approx(arr.mean())
        assert res.q1 == pytest.approx(np.percentile(arr, 25))
        assert len(res.errors) == 9


class TestCrossbarOracle:
    def test_defective_dense_forward_matches_analog_readout(self):
        params = DeviceParams(g_lrs=10.0, g_hrs=1.0, g_tr=10.0, g_of=500.0,
                              g_ff=0.0, n_states=16)
        dev_ff, dev_of = pair_deviations(params)
        rng = np.random.default_rng(23)
        in_dim, out_dim = 24, 10
        layer = Dense(in_dim, out_dim, rng, qspec=QuantSpec(), dtype=np.float64)
        plus, minus = form_pairs(rng, out_dim * in_dim, 0.05, 0.05, FormingStrategy.B)
        cfg = config_from_pairs((out_dim, in_dim), plus, minus, dev_ff, dev_of)
        layer.set_defects(cfg, "physical")
        layer.b[...] = 0.0
        x = rng.uniform(0.0, 1.0, size=(5, in_dim))
        digital = layer.forward(x)

        w_q = layer.effective_weights()  # includes defects; only for shape/grid
        from xbarlab.quantize import quantize_weights

        w_clean = quantize_weights(layer.w, 4)
        states = pair_state_array(plus.reshape(out_dim, in_dim),
                                  minus.reshape(out_dim, in_dim))
        tile = map_weights(w_clean.T, params, states.T)
        analog = mac(tile, x)
        assert np.max(np.abs(analog - digital)) <= 1e-6 * (1 + np.max(np.abs(digital)))


class TestEdgeExemption:
    def test_exempt_edges_off_crossbar(self):
        full = build_surrogate_cnn(seed=1, qspec=QuantSpec(), in_shape=(1, 8, 8),
                                   channels=(2, 3), hidden=5)
        exempt = build_surrogate_cnn(seed=1, qspec=QuantSpec(), in_shape=(1, 8, 8),
                                     channels=(2, 3), hidden=5, exempt_edges=True)
        assert len(full.crossbar_layers()) == 4
        assert len(exempt.crossbar_layers()) == 2
        assert exempt.layers[0].qspec is None
        assert exempt.layers[-1].qspec is None

    def test_exemption_survives_checkpoint(self, tmp_path):
        net = build_surrogate_cnn(seed=2, qspec=QuantSpec(), in_shape=(1, 8, 8),
                                  channels=(2, 3), hidden=5, exempt_edges=True)
        save_checkpoint(net, tmp_path / "m.npz")
        loaded = load_checkpoint(tmp_path / "m.npz")
        assert len(loaded.crossbar_layers()) == 2
        x = np.random.default_rng(0).uniform(0, 1, (3, 1, 8, 8)).astype(np.float32)
        assert np.allclose(net.forward(x), loaded.forward(x))


class TestFixedConfigurationRetraining:
    def test_fixed_seed_samples_one_configuration_total(self, monkeypatch):
        import importlib

        train_mod = importlib.import_module("xbarlab.nn.train")
        calls = []
        real = train_mod.sample_config

        def spy(shape, model, seed):
            calls.append(seed)
            return real(shape, model, seed)

        monkeypatch.setattr(train_mod, "sample_config", spy)
        x, y = make_blobs(400, dim=8, classes=3, seed=23)
        model = DefectModel.combined(0.05, 0.05, FormingStrategy.B)
        net = build_mlp(11, [8, 10, 3], qspec=QuantSpec(), dtype=np.float64)
        spec = TrainSpec(epochs=2, batch_size=100, lr_schedule=((0, 0.02),),
                         defect_model=model, seed=31, fixed_defect_seed=99)
        train(net, (x, y), spec)
        # one draw per crossbar layer, not one per step
        assert len(calls) == len(net.weight_shapes())
        calls.clear()
        spec2 = TrainSpec(epochs=2, batch_size=100, lr_schedule=((0, 0.02),),
                          defect_model=model, seed=31)
        train(net, (x, y), spec2)
        assert len(calls) == len(net.weight_shapes()) * 8  # every step redraws

    def test_recovery_beats_blind_inference(self):
        # chip-specific retraining against the known configuration should at
        # least not hurt relative to evaluating the pre-recovery model on it
        x, y = make_blobs(1200, dim=10, classes=3, seed=29)
        base = build_mlp(12, [10, 16, 3], qspec=QuantSpec(), dtype=np.float64)
        clean_spec = TrainSpec(epochs=25, batch_size=100, lr_schedule=((0, 0.05),),
                               weight_decay=0.0, seed=41)
        train(base, (x, y), clean_spec)
        model = DefectModel.plus_minus_only(0.08)
        from xbarlab.seeding import derive_seed

        configs = [sample_config(s, model, derive_seed(55, "fixed", li))
                   for li, s in enumerate(base.weight_shapes())]
        base.set_defects(configs)
        before = base.error_rate(x, y)
        base.set_defects(None)
        retrain_spec = TrainSpec(epochs=12, batch_size=100, lr_schedule=((0, 0.02),),
                                 weight_decay=0.0, defect_model=model, seed=43,
                                 fixed_defect_seed=55)
        train(base, (x, y), retrain_spec)
        base.set_defects(configs)
        after = base.error_rate(x, y)
        base.set_defects(None)
        assert after <= before


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        x, y = make_blobs(300, dim=8, classes=3, seed=19)
        net = build_mlp(10, [8, 12, 3], qspec=QuantSpec(), dtype=np.float64,
                        activation="pact")
        spec = TrainSpec(epochs=2, batch_size=50, lr_schedule=((0, 0.05),), seed=6)
        train(net, (x, y), spec)
        path = tmp_path / "model.npz"
        save_checkpoint(net, path, extra_meta={"note": "test"})
        loaded = load_checkpoint(path)
        assert np.array_equal(net.predict(x), loaded.predict(x))
        for a, b in zip(net.layers, loaded.layers):
            for name, arr in a.state_arrays().items():
                assert np.array_equal(arr, b.state_arrays()[name]), name
        assert loaded.meta["provenance"]["note"] == "test"

    def test_surrogate_cnn_round_trip(self, tmp_path):
        net = build_surrogate_cnn(seed=3, qspec=QuantSpec(), in_shape=(1, 8, 8),
                                  channels=(2, 3), hidden=5)
        x = np.random.default_rng(1).uniform(0, 1, (4, 1, 8, 8)).astype(np.float32)
        path = tmp_path / "cnn.npz"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert np.allclose(net.forward(x), loaded.forward(x))


def _write_idx(path, array, gz=False):
    dims = array.shape
    header = struct.pack(f">4B{len(dims)}I", 0, 0, 0x08, len(dims), *dims)
    payload = header + array.astype(np.uint8).tobytes()
    if gz:
        with gzip.open(path, "wb") as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


class TestIdxIngestion:
    def test_round_trip_plain_and_gz(self, tmp_path):
        rng = np.random.default_rng(3)
        images = rng.integers(0, 256, size=(7, 5, 4), dtype=np.uint8)
        _write_idx(tmp_path / "imgs", images)
        _write_idx(tmp_path / "imgs.gz", images, gz=True)
        assert np.array_equal(read_idx(tmp_path / "imgs"), images)
        assert np.array_equal(read_idx(tmp_path / "imgs.gz"), images)

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"\x01\x02\x03\x04rest")
        with pytest.raises(ValueError):
            read_idx(tmp_path / "bad")

    def test_truncated_payload_rejected(self, tmp_path):
        header = struct.pack(">4B2I", 0, 0, 0x08, 2, 4, 4)
        (tmp_path / "short").write_bytes(header + b"\x00" * 10)
        with pytest.raises(ValueError):
            read_idx(tmp_path / "short")

    def test_mnist_layout(self, tmp_path):
        rng = np.random.default_rng(5)
        for stem, n in (("train", 32), ("t10k", 8)):
            imgs = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
            lbls = rng.integers(0, 10, size=(n,), dtype=np.uint8)
            _write_idx(tmp_path / f"{stem}-images-idx3-ubyte", imgs)
            _write_idx(tmp_path / f"{stem}-labels-idx1-ubyte", lbls)
        xtr, ytr, xte, yte = load_mnist(tmp_path)
        assert xtr.shape == (32, 1, 28, 28) and xte.shape == (8, 1, 28, 28)
        assert xtr.dtype == np.float32 and xtr.max() <= 1.0
        assert ytr.shape == (32,) and yte.shape == (8,)

    def test_magic_mismatch_detected(self, tmp_path):
        rng = np.random.default_rng(5)
        # labels where images belong: 1-d array has the label magic
        lbls = rng.integers(0, 10, size=(32,), dtype=np.uint8)
        _write_idx(tmp_path / "train-images-idx3-ubyte", lbls)
        _write_idx(tmp_path / "train-labels-idx1-ubyte", lbls)
        _write_idx(tmp_path / "t10k-images-idx3-ubyte", lbls)
        _write_idx(tmp_path / "t10k-labels-idx1-ubyte", lbls)
        with pytest.raises(ValueError):
            load_mnist(tmp_path)


class TestGlyphCorpus:
    def test_deterministic(self):
        a, la = make_glyphs(64, seed=3, size=20)
        b, lb = make_glyphs(64, seed=3, size=20)
        assert np.array_equal(a, b) and np.array_equal(la, lb)
        c, _ = make_glyphs(64, seed=4, size=20)
        assert not np.array_equal(a, c)

    def test_balanced_and_bounded(self):
        x, y = make_glyphs(200, seed=7, size=20)
        counts = np.bincount(y, minlength=10)
        assert counts.min() == 20 and counts.max() == 20
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_load_dataset_names(self):
        xtr, ytr, xte, yte = load_dataset("synthetic", train_limit=50, test_limit=20)
        assert xtr.shape[0] == 50 and xte.shape[0] == 20
        with pytest.raises(ValueError):
            load_dataset("imagenet")
