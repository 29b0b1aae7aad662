import pytest
from pydantic import ValidationError

from augment.classical import AugmentPolicy
from errors import ContractViolation, UsageError
from evaluation.metrics import affinity, build_report, diversity, seed_stats
from evaluation.search import (
    TABLE_COLUMNS,
    GridPoint,
    GridResult,
    GridSpec,
    best_policy,
    best_row_index,
    read_grid_table,
    result_table,
    run_grid,
    write_grid_table,
)
from recognition.models import RecognizerSpec, build
from recognition.training import EpochMetrics, TrainedRecognizer, TrainSchedule, train_recognizer


def point(index, sigmas, accuracy):
    return GridPoint(
        index=index,
        sigma_scale=sigmas[0],
        sigma_shift=sigmas[1],
        sigma_noise=sigmas[2],
        accuracies=[accuracy],
        report=build_report(-0.1 * index, 0.2, [accuracy], [0]),
        seconds=1.0,
    )


@pytest.fixture
def grid_result():
    points = [
        point(0, (0.1, 0.1, 0.1), 0.7),
        point(1, (0.2, 0.1, 0.3), 0.8),
        point(2, (0.3, 0.1, 0.1), 0.8),
    ]
    return GridResult(points=points, expected_points=3, best_index=2, total_seconds=3.0, complete=True)


class TestSeedStats:
    def test_single_seed_has_no_spread(self):
        assert seed_stats([0.5]) == (0.5, 0.0)

    def test_standard_error(self):
        mean, std_error = seed_stats([0.7, 0.9])
        assert mean == pytest.approx(0.8)
        assert std_error == pytest.approx(0.1)

    def test_empty(self):
        with pytest.raises(ContractViolation):
            seed_stats([])


class TestAffinityDiversity:
    @pytest.fixture
    def recognizer(self, toy_dataset):
        spec = RecognizerSpec(num_classes=3, length=toy_dataset.length, width=toy_dataset.width, hidden=3, latent=3)
        return build(spec)

    def test_identical_sets_have_zero_affinity(self, recognizer, toy_dataset):
        assert affinity(recognizer, toy_dataset, toy_dataset) == 0.0
        copy = toy_dataset.with_samples(list(toy_dataset.samples))
        assert affinity(recognizer, toy_dataset, copy) == 0.0

    def test_class_count_mismatch(self, recognizer, toy_dataset, ramp_dataset):
        with pytest.raises(ContractViolation):
            affinity(recognizer, toy_dataset, ramp_dataset)

    def test_diversity_reads_best_epoch(self, recognizer):
        history = [
            EpochMetrics(epoch=1, train_loss=1.0, train_acc=0.5, val_loss=1.5, val_acc=0.4, lr=1e-3),
            EpochMetrics(epoch=2, train_loss=0.5, train_acc=0.7, val_loss=0.9, val_acc=0.6, lr=1e-3),
            EpochMetrics(epoch=3, train_loss=0.2, train_acc=0.9, val_loss=1.1, val_acc=0.6, lr=1e-3),
        ]
        trained = TrainedRecognizer(recognizer=recognizer, history=history, best_epoch=2)
        assert diversity(trained) == pytest.approx(0.4)

    def test_diversity_needs_history(self, recognizer):
        with pytest.raises(ContractViolation):
            diversity(TrainedRecognizer(recognizer=recognizer))

    @pytest.mark.slow
    def test_memorization_has_no_diversity(self, memorization_set, memorization_schedule):
        spec = RecognizerSpec(num_classes=3, length=8, width=6, hidden=16, attention=8, latent=5)
        trained = train_recognizer(build(spec), memorization_set, memorization_set, memorization_schedule)
        assert abs(diversity(trained)) < 0.05

    def test_report_orientations(self):
        report = build_report(-0.25, 0.1, [0.5, 0.7], [0, 1], {"train": "abc"})
        assert report.affinity == -0.25
        assert report.affinity_shift == 0.25
        assert report.accuracy_mean == pytest.approx(0.6)
        assert report.provenance == {"train": "abc"}

    def test_report_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            build_report(float("nan"), 0.1, [0.5], [0])


class TestGridSpec:
    def test_default_grid_order(self):
        points = GridSpec().points()
        assert len(points) == 75
        assert points[:2] == [(0.1, 0.1, 0.1), (0.1, 0.1, 0.2)]
        assert points[-1] == (0.3, 0.3, 0.3)

    def test_from_settings(self):
        grid = GridSpec.from_settings({
            "SIGMA_SCALE": "0.1, 0.2",
            "SIGMA_NOISE": "0.05",
            "SEEDS": "0,1",
            "KIND": "cnn",
            "HIDDEN": "4",
            "MAX_EPOCHS": "2",
        })
        assert grid.sigma_scale == [0.1, 0.2]
        assert grid.sigma_noise == [0.05]
        assert grid.seeds == [0, 1]
        assert grid.kind == "cnn"
        assert grid.hidden == 4
        assert grid.schedule.max_epochs == 2
        assert len(grid.points()) == 2 * 5 * 1

    def test_unknown_setting(self):
        with pytest.raises(UsageError):
            GridSpec.from_settings({"SIGMA_ROTATE": "0.1"})

    def test_negative_sigma(self):
        with pytest.raises(ValidationError):
            GridSpec(sigma_scale=[-0.1])


class TestBestPoint:
    def test_ties_prefer_smaller_noise(self, grid_result):
        policy = best_policy(grid_result, AugmentPolicy(joint_min=1, joint_max=2, multiplier=2))
        assert (policy.sigma_scale, policy.sigma_shift, policy.sigma_noise) == (0.3, 0.1, 0.1)
        assert policy.multiplier == 2

    def test_table_argmax_agrees(self, grid_result, tmp_path):
        path = tmp_path / "grid.tsv"
        write_grid_table(grid_result, str(path))
        table = read_grid_table(str(path))
        assert list(table.columns) == TABLE_COLUMNS
        assert best_row_index(table) == 2
        assert table["accuracy_mean"].tolist() == result_table(grid_result)["accuracy_mean"].tolist()

    def test_empty_result(self):
        empty = GridResult(points=[], expected_points=3, best_index=-1, total_seconds=0.0, complete=False)
        with pytest.raises(ContractViolation):
            best_policy(empty)


@pytest.mark.slow
class TestRunGrid:
    def test_point_budget_marks_incomplete(self, toy_split):
        train, val = toy_split
        grid = GridSpec(
            sigma_scale=[0.1], sigma_shift=[0.1], sigma_noise=[0.1, 0.2], seeds=[0],
            hidden=3, latent=3, multiplier=1, max_points=1,
            schedule=TrainSchedule(lr=1e-2, batch_size=9, max_epochs=1),
        )
        result = run_grid(train, val, grid)
        assert len(result.points) == 1
        assert result.expected_points == 2
        assert not result.complete
        assert result.best_index == 0
        report = result.points[0].report
        assert report.affinity_shift == -report.affinity
        assert 0.0 <= report.accuracy_mean <= 1.0

    def test_reproducible(self, toy_split):
        train, val = toy_split
        grid = GridSpec(
            sigma_scale=[0.2], sigma_shift=[0.1], sigma_noise=[0.1], seeds=[0, 1],
            hidden=3, latent=3, multiplier=1,
            schedule=TrainSchedule(lr=1e-2, batch_size=9, max_epochs=1),
        )
        first = result_table(run_grid(train, val, grid))
        second = result_table(run_grid(train, val, grid))
        assert first.equals(second)

    def test_time_budget_cancels_queued_points(self, toy_split):
        train, val = toy_split
        grid = GridSpec(
            sigma_scale=[0.1, 0.2], sigma_shift=[0.1, 0.2], sigma_noise=[0.1], seeds=[0],
            hidden=3, latent=3, multiplier=1, max_seconds=1e-6,
            schedule=TrainSchedule(lr=1e-2, batch_size=9, max_epochs=1),
        )
        result = run_grid(train, val, grid, jobs=2)
        assert len(result.points) == 1
        assert result.expected_points == 4
        assert not result.complete
