import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autostereo.autograd import Tensor, no_grad
from autostereo.datagen import GLYPH_POSES, DatasetConfig, SceneSpec, split_take, stack_pairs
from autostereo.errors import ConfigInvalid, DivergedLoss, EmptyDatabase, EvalBeforeTrain, SizeMismatch
from autostereo.neural import (ModelConfig, TrainConfig, accuracy, build_model, decode, evaluate,
                               load_model, predict, retrieve, save_model, score,
                               synthesize_neural_autostereogram, train_classifier, train_decoder,
                               train_watermark, variant, watermark_batch)
from autostereo.neural.applications import precision_at_k
from autostereo.neural.training import BatchSampler

SMALL = dict(input_size=32, base_channels=4)


def untrained_forward(model, x):
    # batch norm has no running statistics yet, so use batch statistics
    model.train()
    with no_grad():
        return model(Tensor(x)).data


def warmed(model, seed=0):
    model.train()
    with no_grad():
        model(Tensor(np.random.default_rng(seed).random((4, 1, 32, 32)).astype(np.float32)))
    model.eval()
    return model


@pytest.fixture(scope="module")
def tiny_data():
    cfg = DatasetConfig(SceneSpec("glyph", size=(32, 32), pose=GLYPH_POSES, depth_levels=(0.25, 1.0)))
    stream, idx = split_take(cfg, 0, "train", 24)
    return stack_pairs(stream.items(idx))


class TestConfig:
    def test_defaults_and_names(self):
        c = ModelConfig()
        assert c.m == 16 and c.head == "pixel_regression"
        assert c.name == "Stereo-UNet (BN)"
        assert variant(c, use_disparity_conv=False).name == "UNet (BN)"
        r = ModelConfig(backbone="resnet_lite", norm="instance", feature_fusion=True)
        assert r.name == "Stereo-ResNet (IN) + FF"
        k = ModelConfig(head="categories(7)")
        assert k.head == "categories" and k.num_classes == 7
        assert ModelConfig.from_dict(c.to_dict()) == c

    def test_invalid(self):
        for bad in (dict(backbone="vgg"), dict(norm="group"), dict(head="boxes"), dict(input_size=30),
                    dict(m=0), dict(m=100), dict(head="categories(1)")):
            with pytest.raises(ConfigInvalid):
                ModelConfig(**bad)
        with pytest.raises(ConfigInvalid):
            build_model({"backbone": "unet_tiny"})

    def test_train_config(self):
        tc = TrainConfig(steps=10, lr_drop_step=5)
        assert tc.lr == 2e-4 and tc.betas == (0.9, 0.999)
        assert tc.lr_at(4) == 2e-4 and tc.lr_at(5) == pytest.approx(2e-5)
        with pytest.raises(ConfigInvalid):
            TrainConfig(loss="l1")
        with pytest.raises(ConfigInvalid):
            TrainConfig(alpha_range=(0.5, 1.2))


class TestModels:
    @pytest.mark.parametrize("backbone", ["unet_tiny", "resnet_lite"])
    @pytest.mark.parametrize("dc", [True, False])
    def test_untrained_output(self, backbone, dc):
        m = build_model(ModelConfig(backbone=backbone, use_disparity_conv=dc, **SMALL), 0)
        x = np.random.default_rng(0).random((2, 1, 32, 32)).astype(np.float32)
        out = untrained_forward(m, x)
        assert out.shape == (2, 1, 32, 32) and np.isfinite(out).all()

    def test_feature_fusion_and_norms(self):
        for norm in ("none", "batch", "instance"):
            m = build_model(ModelConfig(backbone="resnet_lite", norm=norm, feature_fusion=True, **SMALL), 1)
            assert untrained_forward(m, np.zeros((2, 1, 32, 32), np.float32)).shape == (2, 1, 32, 32)

    def test_classifier_head(self):
        m = build_model(ModelConfig(head="categories(10)", **SMALL), 0)
        assert untrained_forward(m, np.zeros((3, 1, 32, 32), np.float32)).shape == (3, 10)

    def test_stem_parameter_difference(self):
        a = build_model(ModelConfig(**SMALL), 0).num_parameters()
        b = build_model(ModelConfig(use_disparity_conv=False, **SMALL), 0).num_parameters()
        # disparity conv stem: m input channels instead of one, nothing else
        assert a - b == (8 - 1) * 4 * 9

    def test_seeded_init(self):
        a = build_model(ModelConfig(**SMALL), 3).state_dict()
        b = build_model(ModelConfig(**SMALL), 3).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_eval_needs_statistics(self):
        with pytest.raises(EvalBeforeTrain):
            predict(build_model(ModelConfig(**SMALL), 0), np.zeros((1, 1, 32, 32)))

    def test_decode(self):
        m = warmed(build_model(ModelConfig(**SMALL), 0))
        img = np.random.default_rng(1).random((32, 32))
        out = decode(m, img)
        assert out.shape == (32, 32) and out.data.min() == 0.0 and out.data.max() == 1.0
        raw = decode(m, img, raw=True)
        assert isinstance(raw, np.ndarray)
        with pytest.raises(SizeMismatch):
            decode(m, np.zeros((16, 32)))


class TestTraining:
    def test_decoder_loss_falls_and_checkpoints(self, tiny_data, tmp_path):
        x, y, _ = tiny_data
        m = build_model(ModelConfig(**SMALL), 0)
        r = train_decoder(m, (x, y), TrainConfig(batch_size=8, steps=40, lr=2e-3, lr_drop_step=30),
                          out_dir=tmp_path, tag="d")
        first = np.mean([l for _, l, _ in r.losses[:5]])
        last = np.mean([l for _, l, _ in r.losses[-5:]])
        assert last < first
        assert (tmp_path / "d.ckpt").exists()
        assert (tmp_path / "d_loss.csv").read_text().splitlines()[0] == "step,loss,lr"
        back, meta = load_model(tmp_path / "d.ckpt")
        assert meta["task"] == "decoder" and meta["step"] == 40
        assert np.array_equal(predict(back, x[:4]), predict(m, x[:4]))

    def test_training_is_deterministic(self, tiny_data):
        x, y, _ = tiny_data
        runs = [train_decoder(build_model(ModelConfig(**SMALL), 0), (x, y), TrainConfig(batch_size=4, steps=5))
                for _ in range(2)]
        assert [l for _, l, _ in runs[0].losses] == [l for _, l, _ in runs[1].losses]

    def test_diverged_loss(self, tiny_data, tmp_path):
        x, y, _ = tiny_data
        x = x.copy()
        x[:] = np.nan
        m = build_model(ModelConfig(**SMALL), 0)
        with pytest.raises(DivergedLoss) as info:
            train_decoder(m, (x, y), TrainConfig(batch_size=4, steps=3), out_dir=tmp_path)
        assert info.value.step == 0 and info.value.checkpoint is not None

    def test_head_checks(self, tiny_data):
        x, y, labels = tiny_data
        with pytest.raises(ConfigInvalid):
            train_decoder(build_model(ModelConfig(head="categories(10)", **SMALL)), (x, y))
        with pytest.raises(ConfigInvalid):
            train_classifier(build_model(ModelConfig(**SMALL)), (x, y, labels))
        with pytest.raises(ConfigInvalid):
            train_classifier(build_model(ModelConfig(head="categories(10)", **SMALL)),
                             (x, y, np.full(len(x), -1)))

    def test_classifier_runs(self, tiny_data):
        x, y, labels = tiny_data
        m = build_model(ModelConfig(head="categories(10)", **SMALL), 0)
        r = train_classifier(m, (x, y, labels), TrainConfig(batch_size=8, steps=6, loss="ce"))
        assert len(r.losses) == 6
        assert 0.0 <= accuracy(m, x, labels) <= 1.0

    def test_watermark_runs(self, tiny_data):
        x, y, _ = tiny_data
        m = build_model(ModelConfig(**SMALL), 0)
        carriers = np.random.default_rng(0).random((5, 1, 32, 32))
        r = train_watermark(m, (x, y), TrainConfig(batch_size=4, steps=3), carriers=carriers)
        assert len(r.losses) == 3

    def test_watermark_batch(self):
        s, c = np.ones((2, 1, 4, 4)), np.zeros((2, 1, 4, 4))
        out = watermark_batch(s, c, [0.0, 0.2])
        assert np.all(out[0] == 0.0) and np.allclose(out[1], 0.2)

    def test_batch_sampler_epochs(self):
        bs = BatchSampler(10, 3, 0)
        seen = np.concatenate([bs.next() for _ in range(3)])
        assert len(set(seen.tolist())) == 9


class TestEvaluation:
    def test_report(self, tiny_data, tmp_path):
        x, y, _ = tiny_data
        m = warmed(build_model(ModelConfig(**SMALL), 0))
        rep = evaluate(m, x[:4], y[:4], conditions=("clean", "blur:1"))
        assert [r.condition for r in rep.rows] == ["clean", "blur1", "classic"]
        assert rep.to_csv().splitlines()[0] == "condition,psnr,ssim,n"
        assert rep.to_csv() == evaluate(m, x[:4], y[:4], conditions=("clean", "blur:1")).to_csv()
        rep.write(tmp_path)
        assert (tmp_path / "eval.txt").read_text().count("\n") == 5
        assert rep.row("clean").n == 4

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 100.0), st.floats(-50.0, 50.0), st.integers(0, 1000))
    def test_affine_invariance(self, a, b, seed):
        rng = np.random.default_rng(seed)
        pred, target = rng.random((2, 1, 16, 16)) + 0.1, rng.random((2, 1, 16, 16))
        p0, s0 = score(pred, target)
        p1, s1 = score(a * pred + b, target)
        assert abs(p0 - p1) < 1e-6 and abs(s0 - s1) < 1e-6


class TestApplications:
    def test_retrieval(self, tiny_data):
        x, _, labels = tiny_data
        m = warmed(build_model(ModelConfig(head="categories(10)", **SMALL), 0))
        hits = retrieve(m, x, x[3, 0], k=5)
        assert hits[0].index == 3 and hits[0].score == pytest.approx(0.0, abs=1e-9)
        assert len(retrieve(m, x[:4], x[0, 0], k=50)) == 4
        cat = retrieve(m, x, 2, k=len(x))
        assert all(a.score >= b.score for a, b in zip(cat, cat[1:]))
        assert 0.0 <= precision_at_k(cat[:5], labels, 2) <= 1.0
        with pytest.raises(EmptyDatabase):
            retrieve(m, [], 1)
        with pytest.raises(ConfigInvalid):
            retrieve(m, x, 12)

    def test_neuralgram(self):
        m = warmed(build_model(ModelConfig(**SMALL), 0))
        target = np.ones((32, 32))
        target[8:24, 8:24] = 0.25
        res = synthesize_neural_autostereogram(m, target, steps=30, lr=0.05, tv_weight=1e-3)
        assert res.final_loss < res.initial_loss
        assert res.image.data.min() >= 0.0 and res.image.data.max() <= 1.0
        assert all(p.requires_grad for p in m.parameters())
        assert len(res.losses) == 31
        res2 = synthesize_neural_autostereogram(m, target, steps=2, init="texture")
        assert res2.image.shape == (32, 32)
        with pytest.raises(SizeMismatch):
            synthesize_neural_autostereogram(m, np.ones((16, 16)), steps=1)
        with pytest.raises(ConfigInvalid):
            synthesize_neural_autostereogram(m, target, steps=1, init="zeros")


def test_model_save_roundtrip(tmp_path):
    m = warmed(build_model(ModelConfig(backbone="resnet_lite", **SMALL), 2))
    save_model(tmp_path / "r.ckpt", m, {"note": "x"})
    back, meta = load_model(tmp_path / "r.ckpt")
    assert meta["note"] == "x"
    x = np.random.default_rng(1).random((2, 1, 32, 32))
    assert np.array_equal(predict(back, x), predict(m, x))
