import os

import numpy as np
import pytest

from core.gradcheck import check_gradients
from core.losses import l1_loss
from core.params import ParamSet
from core.tensor import DiffValue, as_value, mean
from data.skeleton import from_arrays
from errors import CheckpointError, ContractViolation, NumericalFailure
from gan.networks import DiscriminatorNet, GeneratorNet, discriminator_forward, generator_forward
from gan.objectives import (
    full_generator_objective,
    loss_cycle,
    loss_disc,
    loss_gen,
    loss_identity,
    memoized,
)
from gan.trainer import GanModel, GanTrainConfig, generate, load_gan, save_gan, train, train_step
from recognition.models import RecognizerSpec, build
from recognition.training import TrainedRecognizer, save_recognizer


@pytest.fixture
def cfg():
    return GanTrainConfig(hidden=3, batch_size=4, max_epochs=2, seed=0)


@pytest.fixture
def model(cfg, toy_dataset):
    return GanModel.initialize(toy_dataset.width, cfg)


def identity(x):
    return as_value(x)


def neutral_critic(x):
    return DiffValue(np.zeros(as_value(x).shape[0]))


class TestNetworks:
    def test_shapes(self):
        rng = np.random.default_rng(0)
        G = GeneratorNet.initialize(6, 4, rng)
        D = DiscriminatorNet.initialize(6, 4, rng)
        x = rng.normal(size=(3, 5, 6))
        assert generator_forward(G, x).shape == (3, 5, 6)
        assert discriminator_forward(D, x).shape == (3,)

    def test_generator_is_teacher_forced(self):
        rng = np.random.default_rng(0)
        G = GeneratorNet.initialize(6, 4, rng)
        x = rng.normal(size=(1, 5, 6))
        changed = x.copy()
        changed[0, 2] += 1.0
        before, after = generator_forward(G, x).data, generator_forward(G, changed).data
        np.testing.assert_array_equal(before[:, :2], after[:, :2])

    def test_noise_needs_rng(self):
        G = GeneratorNet.initialize(6, 4, np.random.default_rng(0))
        with pytest.raises(ContractViolation):
            generator_forward(G, np.zeros((1, 3, 6)), noise_sigma=0.1)

    def test_rejects_mismatched_parameters(self):
        params = ParamSet()
        params.add("gru.W_z", np.zeros((6, 4)))
        params.add("fc.W", np.zeros((4, 5)))
        with pytest.raises(ContractViolation):
            GeneratorNet(params)

    def test_frozen_records_no_tape(self):
        G = GeneratorNet.initialize(6, 4, np.random.default_rng(0))
        assert not generator_forward(G.frozen(), np.zeros((1, 3, 6))).requires_grad


class TestObjectives:
    def test_identity_mappings_have_no_cycle_or_identity_loss(self):
        x = np.random.default_rng(0).normal(size=(2, 4, 6))
        y = np.random.default_rng(1).normal(size=(2, 4, 6))
        assert loss_cycle(identity, identity, x, y).item() == 0.0
        assert loss_identity(identity, x, y).item() == 0.0

    def test_neutral_critic(self):
        x = np.zeros((2, 4, 6))
        assert loss_gen(neutral_critic, identity, x).item() == pytest.approx(np.log(2.0))
        assert loss_disc(neutral_critic, x, DiffValue(x)).item() == pytest.approx(2 * np.log(2.0))

    def test_full_objective_weights(self):
        x = np.zeros((2, 4, 6))
        total, parts = full_generator_objective(
            identity, identity, neutral_critic, neutral_critic, x, x, lambda1=10.0, lambda2=5.0
        )
        assert total.item() == pytest.approx(2 * np.log(2.0))
        assert set(parts) == {"gen_g", "gen_f", "cycle", "identity"}

    def test_discriminator_loss_does_not_reach_generator(self):
        rng = np.random.default_rng(0)
        G = GeneratorNet.initialize(6, 3, rng)
        D = DiscriminatorNet.initialize(6, 3, rng)
        x = rng.normal(size=(2, 4, 6))
        fake = generator_forward(G, x)
        loss_disc(lambda v: discriminator_forward(D, v), x, fake).backward()
        assert all(value.grad is None for _, value in G.params.items())
        assert all(value.grad is not None for _, value in D.params.items())

    def test_memoized_evaluates_once_per_input(self):
        calls = []

        def mapping(x):
            calls.append(x)
            return as_value(x)

        cached = memoized(mapping)
        x = np.ones(3)
        cached(x)
        cached(x)
        cached(np.ones(3))
        assert len(calls) == 2


def affine_mapping(scale, offset):
    return lambda v: as_value(v) * scale + offset


def pooled_critic(weight, bias):
    return lambda v: mean(as_value(v), axis=(1, 2)) * weight + bias


def softplus(z):
    return np.logaddexp(0.0, z)


class TestObjectiveOracles:
    @pytest.fixture
    def cases(self):
        rng = np.random.default_rng(11)
        return [
            dict(
                x=rng.normal(size=(3, 4, 6)),
                y=rng.normal(size=(3, 4, 6)),
                g=rng.normal(size=2),
                f=rng.normal(size=2),
                d=rng.normal(size=2) * 3.0,
            )
            for _ in range(100)
        ]

    def test_generator_loss(self, cases):
        for case in cases:
            x, (ga, gb), (dw, db) = case["x"], case["g"], case["d"]
            logits = (x * ga + gb).mean(axis=(1, 2)) * dw + db
            value = loss_gen(pooled_critic(dw, db), affine_mapping(ga, gb), x).item()
            assert value == pytest.approx(np.mean(softplus(-logits)), rel=1e-10)

    def test_discriminator_loss(self, cases):
        for case in cases:
            x, y, (ga, gb), (dw, db) = case["x"], case["y"], case["g"], case["d"]
            fake = x * ga + gb
            real_logits = y.mean(axis=(1, 2)) * dw + db
            fake_logits = fake.mean(axis=(1, 2)) * dw + db
            expected = np.mean(softplus(-real_logits)) + np.mean(softplus(fake_logits))
            value = loss_disc(pooled_critic(dw, db), y, DiffValue(fake)).item()
            assert value == pytest.approx(expected, rel=1e-10)

    def test_cycle_loss(self, cases):
        for case in cases:
            x, y, (ga, gb), (fa, fb) = case["x"], case["y"], case["g"], case["f"]
            expected = (
                np.mean(np.abs((x * ga + gb) * fa + fb - x))
                + np.mean(np.abs((y * fa + fb) * ga + gb - y))
            )
            value = loss_cycle(affine_mapping(ga, gb), affine_mapping(fa, fb), x, y).item()
            assert value == pytest.approx(expected, rel=1e-10)

    def test_identity_loss(self, cases):
        for case in cases:
            x, y, (ga, gb) = case["x"], case["y"], case["g"]
            expected = np.mean(np.abs(y * ga + gb - y)) + np.mean(np.abs(x * ga + gb - x))
            assert loss_identity(affine_mapping(ga, gb), x, y).item() == pytest.approx(expected, rel=1e-10)

    def test_doubling_generator_on_ones(self):
        ones = np.ones((2, 5, 3))
        double = affine_mapping(2.0, 0.0)
        assert l1_loss(double(ones), ones).item() == 1.0
        assert loss_identity(double, ones, ones).item() == 2.0

    def test_full_objective_gradients(self):
        rng = np.random.default_rng(5)
        G, F = GeneratorNet.initialize(6, 4, rng), GeneratorNet.initialize(6, 4, rng)
        D_X, D_Y = DiscriminatorNet.initialize(6, 4, rng), DiscriminatorNet.initialize(6, 4, rng)
        x, y = rng.normal(size=(2, 5, 6)), rng.normal(size=(2, 5, 6))

        def loss():
            total, _ = full_generator_objective(
                lambda v: generator_forward(G, v, noise_sigma=0.0),
                lambda v: generator_forward(F, v, noise_sigma=0.0),
                lambda v: discriminator_forward(D_X, v),
                lambda v: discriminator_forward(D_Y, v),
                x, y, lambda1=10.0, lambda2=5.0,
            )
            return total

        values = {
            "G.gru.W_z": G.params["gru.W_z"],
            "G.fc.W": G.params["fc.W"],
            "F.gru.U_h": F.params["gru.U_h"],
            "F.fc.b": F.params["fc.b"],
            "D_Y.head.W": D_Y.params["head.W"],
        }
        errors = check_gradients(loss, values)
        assert max(errors.values()) < 1e-4


class TestTraining:
    def test_step_updates_every_network(self, model, toy_dataset):
        before = {name: net.params.arrays() for name, net in model.networks().items()}
        frames = toy_dataset.frames_array()
        record = train_step(model, frames[:4], frames[4:8])
        assert np.isfinite(record.total)
        assert record.total == pytest.approx(
            record.gen_g + record.gen_f + 10.0 * record.cycle + 5.0 * record.identity
        )
        for name, net in model.networks().items():
            assert model.optimizers[name].step == 1
            assert not np.array_equal(net.params["gru.W_z"].data, before[name]["gru.W_z"])

    def test_train_records_epochs(self, model, cfg, toy_dataset):
        _, history = train(model, toy_dataset, cfg)
        assert [record.epoch for record in history] == [1, 2]
        assert history[0].batches == 3
        assert model.epoch == 2

    def test_stops_when_objective_settles(self, cfg, toy_dataset):
        settling = cfg.model_copy(update={"max_epochs": 10, "convergence_window": 1, "convergence_tol": 1e6})
        model = GanModel.initialize(toy_dataset.width, settling)
        _, history = train(model, toy_dataset, settling)
        assert len(history) == 2

    def test_same_seed_same_weights(self, cfg, toy_dataset):
        first, _ = train(GanModel.initialize(toy_dataset.width, cfg), toy_dataset, cfg)
        second, _ = train(GanModel.initialize(toy_dataset.width, cfg), toy_dataset, cfg)
        np.testing.assert_array_equal(first.G.params["fc.W"].data, second.G.params["fc.W"].data)

    def test_empty_dataset(self, model, cfg, toy_dataset):
        with pytest.raises(ContractViolation):
            train(model, toy_dataset.with_samples([]), cfg)

    def test_divergence_dumps_state(self, model, toy_dataset, tmp_path):
        model.G.params["fc.W"].data = np.full(model.G.params["fc.W"].shape, np.nan)
        frames = toy_dataset.frames_array()
        with pytest.raises(NumericalFailure) as info:
            train_step(model, frames[:2], frames[2:4], dump_dir=str(tmp_path))
        assert info.value.dump_path is not None
        assert os.path.isfile(info.value.dump_path)
        assert "G.fc.W" in info.value.state["non_finite_parameters"]

    def test_checkpointing_during_training(self, cfg, toy_dataset, tmp_path):
        path = tmp_path / "gan.ckpt"
        checkpointed = cfg.model_copy(update={"checkpoint_every": 1, "checkpoint_path": str(path)})
        train(GanModel.initialize(toy_dataset.width, checkpointed), toy_dataset, checkpointed)
        _, metadata = load_gan(str(path))
        assert metadata["epoch"] == 2


class TestGeneration:
    def test_alternates_generators_and_keeps_labels(self, model, toy_dataset):
        synthetic = generate(model, toy_dataset, per_sample=2, sampling_noise=False)
        assert len(synthetic) == 2 * len(toy_dataset)
        assert synthetic.name == "toy-clean-gad"
        assert list(synthetic.labels()) == [s.label for s in toy_dataset for _ in range(2)]
        assert synthetic[0].source.endswith("#gan0") and synthetic[1].source.endswith("#gan1")
        frames = toy_dataset.frames_array()
        np.testing.assert_allclose(synthetic[0].frames, generator_forward(model.G, frames[:1]).data[0])
        np.testing.assert_allclose(synthetic[1].frames, generator_forward(model.F, frames[:1]).data[0])

    def test_sampling_is_reproducible(self, model, toy_dataset):
        first = generate(model, toy_dataset, per_sample=1, seed=5)
        second = generate(model, toy_dataset, per_sample=1, seed=5)
        quiet = generate(model, toy_dataset, per_sample=1, seed=5, sampling_noise=False)
        assert first.checksum() == second.checksum()
        assert first.checksum() != quiet.checksum()

    def test_zero_per_sample(self, model, toy_dataset):
        assert len(generate(model, toy_dataset, per_sample=0)) == 0

    def test_width_mismatch(self, model):
        narrow = from_arrays(np.zeros((2, 4, 3)), [0, 1], 2, "narrow")
        with pytest.raises(ContractViolation):
            generate(model, narrow, per_sample=1)


class TestPersistence:
    def test_round_trip(self, model, toy_dataset, tmp_path):
        path = tmp_path / "gan.ckpt"
        save_gan(model, str(path), length=toy_dataset.length)
        loaded, metadata = load_gan(str(path))
        assert metadata["kind"] == "imaginative-gan"
        assert metadata["hidden"] == 3
        assert metadata["length"] == toy_dataset.length
        original = generate(model, toy_dataset, per_sample=2, seed=1)
        restored = generate(loaded, toy_dataset, per_sample=2, seed=1)
        assert original.checksum() == restored.checksum()

    def test_recognizer_checkpoint_is_rejected(self, tmp_path):
        spec = RecognizerSpec(num_classes=2, length=4, width=6, hidden=2, latent=2)
        path = tmp_path / "recognizer.ckpt"
        save_recognizer(TrainedRecognizer(recognizer=build(spec)), str(path))
        with pytest.raises(CheckpointError):
            load_gan(str(path))
