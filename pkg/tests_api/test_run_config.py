from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pytest
from pydantic import ValidationError

from app.errors import ConfigError
from app.services.run_config import (
    REDACTED,
    dump_run_config,
    require_inputs,
    resolve_run_config,
    write_run_config,
)
from models.run_models import RunConfig, ScorerKind


def write_config(tmp_path, text):
    path = tmp_path / "lmrec.conf"
    path.write_text(text, encoding="utf-8")
    return path


class TestResolution:
    """defaults < config file < environment < flags"""

    def test_defaults(self):
        cfg = resolve_run_config(environ={})
        assert cfg.dataset.min_pos == 21
        assert cfg.bpr.d == 10
        assert cfg.bpr.learning_rate == 0.001
        assert cfg.ngram.weights == (0.1, 0.3, 0.6)
        assert cfg.scorer == ScorerKind.NGRAM
        assert cfg.sweep.context_sizes == (0, 1, 2, 3, 5, 10, 15, 20)

    def test_file_then_env_then_flags(self, tmp_path):
        path = write_config(
            tmp_path,
            "# comment\n"
            "scorer = remote\n"
            "dataset.min_pos = 30\n"
            "remote.endpoint = http://from-file:1\n"
            "remote.model_id = gpt2-medium\n"
            "sweep.user_counts = 10,50,all\n",
        )
        env = {"LMREC_ENDPOINT": "http://from-env:2", "LMREC_API_KEY": "k"}
        cfg = resolve_run_config(path, {"remote.model_id": "gpt2-large", "bpr.d": None}, environ=env)
        assert cfg.scorer == ScorerKind.REMOTE
        assert cfg.dataset.min_pos == 30
        assert cfg.remote.endpoint == "http://from-env:2"
        assert cfg.remote.api_key == "k"
        assert cfg.remote.model_id == "gpt2-large"
        assert cfg.bpr.d == 10
        assert cfg.sweep.user_counts == (10, 50, None)

    def test_seed_reaches_dataset_and_bpr(self, tmp_path):
        cfg = resolve_run_config(flags={"seed": 7}, environ={})
        assert (cfg.seed, cfg.dataset.seed, cfg.bpr.seed) == (7, 7, 7)
        cfg = resolve_run_config(write_config(tmp_path, "seed = 7\nbpr.seed = 1\n"), environ={})
        assert (cfg.dataset.seed, cfg.bpr.seed) == (7, 1)

    def test_unknown_keys(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_run_config(write_config(tmp_path, "dataset.min_posi = 3\n"), environ={})
        with pytest.raises(ConfigError):
            resolve_run_config(flags={"nothing": 1}, environ={})
        with pytest.raises(ConfigError):
            resolve_run_config(flags={"seed.value": 1}, environ={})

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_run_config(tmp_path / "absent.conf", environ={})

    def test_invalid_values(self):
        with pytest.raises(ValidationError):
            resolve_run_config(flags={"bpr.d": 0}, environ={})
        with pytest.raises(ValidationError):
            resolve_run_config(flags={"dataset.min_pos": 3}, environ={})
        with pytest.raises(ValidationError):
            resolve_run_config(flags={"dataset.pos_threshold": 2.0}, environ={})


class TestDump:
    """run_config.txt written next to the outputs"""

    def test_round_trip(self, tmp_path):
        cfg = resolve_run_config(flags={"seed": 3, "out_dir": tmp_path, "sweep.user_counts": "5,all"}, environ={})
        path = write_run_config(cfg)
        assert path == tmp_path / "run_config.txt"
        assert resolve_run_config(path, environ={}) == cfg

    def test_api_key_is_redacted(self):
        cfg = resolve_run_config(environ={"LMREC_API_KEY": "s3cret"})
        text = dump_run_config(cfg)
        assert "s3cret" not in text
        assert f'remote.api_key="{REDACTED}"' in text


def test_require_inputs(tmp_path):
    present = tmp_path / "ratings.dat"
    present.write_text("1::1::5::1\n", encoding="utf-8")
    cfg = RunConfig(ratings_path=present, movies_path=tmp_path / "movies.dat")
    require_inputs(cfg, "ratings_path")
    with pytest.raises(ConfigError, match="movies.dat"):
        require_inputs(cfg, "movies_path")
    with pytest.raises(ConfigError, match="corpus_path is not set"):
        require_inputs(cfg, "corpus_path")
