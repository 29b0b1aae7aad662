import pandas
import pytest
from pydantic import ValidationError

from errors import ContractViolation, UsageError
from pipeline.manifest import RunManifest
from pipeline.recipes import RecipeConfig, choose_withheld, load_splits, prepare, run_recipe


def tiny_recipe(name, out_dir, **overrides):
    fields = dict(
        name=name, out_dir=str(out_dir), toy_per_class=2, toy_length=8, kinds=["lstm"], seeds=[0],
        recognizer_hidden=3, recognizer_latent=3, recognizer_epochs=1, gan_hidden=3, gan_epochs=1,
        gan_batch=4, per_sample=1, multiplier=1,
    )
    fields.update(overrides)
    return RecipeConfig(**fields)


class TestPrepare:
    def test_toy(self):
        dataset = prepare("toy", toy_per_class=2, toy_length=8)
        assert len(dataset) == 6
        assert dataset.name == "toy-clean"

    def test_raw_dataset_needs_root(self):
        with pytest.raises(UsageError):
            prepare("msr")

    def test_unknown_dataset(self):
        with pytest.raises(UsageError):
            prepare("kinect", root=None)


class TestConfig:
    def test_unknown_recipe(self, tmp_path):
        with pytest.raises(ValidationError):
            RecipeConfig(name="table9", out_dir=str(tmp_path))

    def test_half_given_paths(self, tmp_path):
        with pytest.raises(UsageError):
            load_splits(tiny_recipe("table1", tmp_path, train_path=str(tmp_path / "train.txt")))

    def test_toy_splits(self, tmp_path):
        train, val = load_splits(tiny_recipe("table1", tmp_path))
        assert train.num_classes == val.num_classes == 3
        assert train.is_uniform and val.is_uniform

    def test_withheld_classes(self):
        chosen = choose_withheld(14, 4, seed=0)
        assert chosen == sorted(set(chosen))
        assert len(chosen) == 4
        assert chosen == choose_withheld(14, 4, seed=0)
        with pytest.raises(ContractViolation):
            choose_withheld(3, 3, seed=0)


@pytest.mark.slow
class TestRecipes:
    def test_table1(self, tmp_path):
        manifest = RunManifest(command=["run-recipe", "table1"])
        paths = run_recipe(tiny_recipe("table1", tmp_path), manifest)
        table = pandas.read_csv(paths[0], sep="\t")
        assert table["data"].tolist() == ["CD", "CAD", "GAD"]
        assert table["recognizer"].tolist() == ["lstm"] * 3
        assert table.loc[0, "affinity"] == 0.0
        assert (table["affinity_shift"] == -table["affinity"]).all()
        assert manifest.artifact(paths[0]).deterministic
        assert not manifest.artifact(paths[1]).deterministic
        assert "train_checksum" in manifest.config

    def test_generalization(self, tmp_path):
        manifest = RunManifest(command=["run-recipe", "generalization"])
        paths = run_recipe(tiny_recipe("generalization", tmp_path, withheld=1), manifest)
        table = pandas.read_csv(paths[0], sep="\t")
        assert set(table["view"]) == {"gad-trained", "cd-scored"}
        assert table.loc[table["view"] == "cd-scored", "withheld"].sum() == 1
        assert table["accuracy_mean"].between(0.0, 1.0).all()

    def test_tables_are_reproducible(self, tmp_path):
        first = run_recipe(tiny_recipe("ablation", tmp_path / "a", ablation_hidden=[2, 3]), RunManifest(command=[]))
        second = run_recipe(tiny_recipe("ablation", tmp_path / "b", ablation_hidden=[2, 3]), RunManifest(command=[]))
        with open(first[0]) as a, open(second[0]) as b:
            assert a.read() == b.read()
        assert pandas.read_csv(first[0], sep="\t")["hidden"].tolist() == [2, 3]

    def test_affinity_scatter_reuses_clean_recognizers(self, tmp_path, monkeypatch):
        def retrain(*args, **kwargs):
            raise AssertionError("clean recognizers were trained a second time")

        monkeypatch.setattr("evaluation.search.train_clean", retrain)
        grid = {"sigma_scale": [0.1], "sigma_shift": [0.1], "sigma_noise": [0.1]}
        cfg = tiny_recipe("affinity-scatter", tmp_path, coarse_grid=grid, fine_grid=grid)
        paths = run_recipe(cfg, RunManifest(command=["run-recipe", "affinity-scatter"]))
        table = pandas.read_csv(paths[0], sep="\t")
        assert table["source"].tolist() == ["coarse", "fine", "CD", "GAD"]
