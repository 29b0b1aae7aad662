"""
Desk-scale end-to-end checks on the toy trajectory dataset: 60 train / 60
validation sequences, T = 40, GAN H = 64, recognizer H = 32.
"""

import numpy as np
import pytest

from data.preprocessing import prepare_clean
from data.synthetic import make_toy_split
from evaluation.metrics import seed_stats
from gan.trainer import GanModel, GanTrainConfig, generate, train
from pipeline.recipes import RecipeConfig, restore_recognizer, train_over_seeds
from recognition.training import evaluate

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3]
PER_SAMPLE = 4


@pytest.fixture(scope="module")
def split():
    train_set, val_set = make_toy_split(20, 40, seed=0)
    return prepare_clean(train_set), prepare_clean(val_set)


@pytest.fixture(scope="module")
def gan_cfg():
    return GanTrainConfig(hidden=64, max_epochs=200, seed=0)


@pytest.fixture(scope="module")
def trained_gan(split, gan_cfg):
    train_set, _ = split
    return train(GanModel.initialize(train_set.width, gan_cfg), train_set, gan_cfg)


@pytest.fixture(scope="module")
def recipe(tmp_path_factory):
    return RecipeConfig(
        name="table1",
        out_dir=str(tmp_path_factory.mktemp("toy")),
        kinds=["lstm"],
        seeds=SEEDS,
        recognizer_hidden=32,
        recognizer_latent=16,
        recognizer_epochs=40,
        recognizer_lr=1e-2,
        per_sample=PER_SAMPLE,
    )


@pytest.fixture(scope="module")
def cd_runs(split, recipe):
    train_set, val_set = split
    return train_over_seeds(recipe, "lstm", {seed: train_set for seed in SEEDS}, val_set)


class TestToyGan:
    def test_objective_falls(self, trained_gan):
        _, history = trained_gan
        assert len(history) >= 2
        assert history[-1].total < history[0].total

    def test_generated_moments_match_training_data(self, split, trained_gan):
        train_set, _ = split
        model, _ = trained_gan
        synthetic = generate(model, train_set, 1, seed=0)
        real = train_set.frames_array().reshape(-1, train_set.width)
        fake = synthetic.frames_array().reshape(-1, train_set.width)
        real_std = real.std(axis=0)
        assert np.all(np.abs(fake.mean(axis=0) - real.mean(axis=0)) <= 0.2 * real_std)
        ratio = fake.std(axis=0) / real_std
        assert np.all((ratio >= 0.8) & (ratio <= 1.2)), ratio


class TestToyAugmentation:
    def test_gad_is_no_worse_and_no_less_stable_than_cd(self, split, trained_gan, recipe, cd_runs):
        train_set, val_set = split
        model, _ = trained_gan
        gad_train = generate(model, train_set, PER_SAMPLE, seed=0)
        gad_runs = train_over_seeds(recipe, "lstm", {seed: gad_train for seed in SEEDS}, val_set)

        cd_mean, cd_error = seed_stats([run.accuracy for run in cd_runs])
        gad_mean, gad_error = seed_stats([run.accuracy for run in gad_runs])
        assert gad_mean >= cd_mean - 0.02
        assert gad_error <= cd_error + 0.02

    def test_withheld_class_is_still_generated_faithfully(self, split, gan_cfg, recipe, cd_runs):
        train_set, _ = split
        withheld, seen = 2, [0, 1]
        model, _ = train(
            GanModel.initialize(train_set.width, gan_cfg),
            train_set.filter_classes(seen, name="toy-train-seen"),
            gan_cfg,
        )
        synthetic = generate(model, train_set, 1, seed=0)
        assert np.sum(synthetic.labels() == withheld) == 20

        per_class = [
            evaluate(restore_recognizer(recipe, "lstm", train_set, run), synthetic).per_class for run in cd_runs
        ]
        withheld_accuracy = np.mean([scores[withheld] for scores in per_class])
        seen_accuracy = np.mean([scores[label] for scores in per_class for label in seen])
        assert abs(withheld_accuracy - seen_accuracy) <= 0.10
