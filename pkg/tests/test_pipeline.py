import numpy as np
import pytest

from saliency_hash.checkpoint import read_checkpoint
from saliency_hash.errors import DataError
from saliency_hash.pipeline import (RunConfig, format_sweep_table, load_run, parse_run_config,
                                    random_code_baseline, read_run_config, run_experiment, save_run,
                                    sidecar_path, sweep, train_run, write_sweep_csv)

FAST = RunConfig(k=8, epochs=2, batch=6, seed=2, widths=(4, 8))


class TestRunConfig:
    def test_parse(self):
        cfg = parse_run_config("arch = L  # residual\n\nk = 24\nr=0.3\nattention = off\nwidths = 8,16\n")
        assert (cfg.arch, cfg.k, cfg.r, cfg.attention, cfg.widths) == ("L", 24, 0.3, False, (8, 16))
        assert cfg.lr == 0.01 and cfg.epochs == 50 and cfg.batch == 10

    def test_text_roundtrip(self):
        cfg = RunConfig(arch="L", k=36, r=0.7, lr=0.005, attention=False, head="relu",
                        thresholds=(0.1, -0.25), data="d.csv", out="o.ckpt")
        assert parse_run_config(cfg.to_text()) == cfg

    @pytest.mark.parametrize("text", ["k 12", "k = twelve", "colour = red", "attention = maybe"])
    def test_errors_name_the_line(self, text):
        with pytest.raises(DataError, match=":2:"):
            parse_run_config("# header\n" + text, "run.cfg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_run_config(tmp_path / "none.cfg")

    def test_updated_ignores_none(self):
        assert RunConfig().updated(k=24, r=None) == RunConfig(k=24)


class TestRuns:
    def test_save_and_load(self, tiny_datasets, tmp_path):
        gallery, _ = tiny_datasets
        model, cfg, history = train_run(FAST, gallery)
        assert len(history) == 2 and cfg.input_shape == (3, 16, 16)
        save_run(model, cfg, tmp_path / "m.ckpt")
        assert sidecar_path(tmp_path / "m.ckpt").is_file()
        loaded, cfg2 = load_run(tmp_path / "m.ckpt")
        assert cfg2 == cfg
        x = gallery.images[:3]
        assert np.array_equal(model(x).data, loaded(x).data)
        _, state = read_checkpoint(tmp_path / "m.ckpt")
        assert set(state) == set(model.state())

    def test_linear_head_fits_median_thresholds(self, tiny_datasets):
        gallery, _ = tiny_datasets
        _, cfg, _ = train_run(FAST.updated(head="linear", epochs=1), gallery)
        assert cfg.thresholds is not None and len(cfg.thresholds) == 8

    def test_experiment_codes_and_report(self, tiny_datasets):
        gallery, queries = tiny_datasets
        res = run_experiment(FAST, gallery, queries, topk=5)
        assert len(res.gallery_codes) == len(gallery) and len(res.query_codes) == len(queries)
        assert res.report.k == 5 and 0 <= res.report.mAP <= 1
        assert np.array_equal(res.query_codes.ids, queries.ids)

    def test_random_baseline_near_class_prior(self, tiny_datasets):
        gallery, queries = tiny_datasets
        rep = random_code_baseline(gallery, queries, k=12, topk=10)
        assert 0.05 < rep.mHR < 0.5


class TestSweep:
    def test_rows_table_and_csv(self, tiny_datasets, tmp_path):
        gallery, queries = tiny_datasets
        rows = sweep(FAST.updated(epochs=1), gallery, queries, [0.3, 0.7], [4, 8], topk=5)
        assert [(r, k) for r, k, _ in rows] == [(0.3, 4), (0.3, 8), (0.7, 4), (0.7, 8)]
        assert all(0 <= m <= 1 for _, _, m in rows)
        table = format_sweep_table(rows, 5).splitlines()
        assert table[0] == "mAP@5" and "K=4" in table[1] and len(table) == 4
        write_sweep_csv(tmp_path / "s.csv", rows)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "r,k,map" and lines[1].startswith("0.3,4,")
