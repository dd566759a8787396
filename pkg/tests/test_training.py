import dataclasses
import math

import numpy as np
import pytest
import torch

from causalpix.encoders import Vocab
from causalpix.training import (
    Batch,
    CausalPixModel,
    ConfigError,
    ConfigHashMismatch,
    CorruptFile,
    RunConfig,
    UnknownConfigKey,
    config_hash,
    load_checkpoint,
    load_config,
    load_dataset,
    make_batch,
    parse_config_text,
    save_checkpoint,
    total_loss,
    train,
    wrap_generated,
)


class TestRunConfig:
    def test_defaults_match_protocol(self):
        cfg = RunConfig()
        assert cfg.lr == 3e-5
        assert cfg.batch_size == 16
        assert cfg.epochs == 20
        assert cfg.negatives == 15
        assert cfg.temperature == 0.07
        assert cfg.diffusion_steps == 200

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            RunConfig(lr=-1.0)
        with pytest.raises(ValueError):
            RunConfig(paradigm="nonsense")
        with pytest.raises(ConfigError):
            RunConfig(channel_mults="1,x")

    def test_mults_parsed(self):
        assert RunConfig(channel_mults="2,4,8").mults() == (2, 4, 8)


class TestConfigParsing:
    def test_key_value_with_comments(self):
        cfg = parse_config_text("# run\nlr = 0.01\nbatch_size=4  # small\n\nparadigm = answer\n")
        assert cfg.lr == 0.01 and cfg.batch_size == 4 and cfg.paradigm == "answer"

    def test_unknown_key_rejected(self):
        with pytest.raises(UnknownConfigKey):
            parse_config_text("learning_rate = 0.01")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("batch_size = four")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("just a line")

    def test_overrides_apply_after_base(self):
        base = parse_config_text("lr = 0.5")
        cfg = parse_config_text("lr = 0.25", base=base)
        assert cfg.lr == 0.25

    def test_file_roundtrip(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 9\nparadigm = latent\n")
        assert load_config(p).seed == 9


class TestConfigHash:
    def test_stable_for_equal_configs(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())

    def test_changes_with_architecture(self):
        assert config_hash(RunConfig()) != config_hash(RunConfig(dim_ctx=64))

    def test_ignores_non_architecture_fields(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig(lr=1.0, seed=42))


class TestTotalLoss:
    def test_breakdown_terms(self, small_run_config, tiny_dataset):
        torch.manual_seed(0)
        vocab = Vocab.default()
        model = CausalPixModel(small_run_config, vocab)
        chains = [s.record.chain for s in tiny_dataset if s.record.chain is not None]
        chain_index_of = {
            s.record.sample_id: i
            for i, s in enumerate(s for s in tiny_dataset if s.record.chain is not None)
        }
        batch = make_batch(tiny_dataset[:8], vocab, chain_index_of)
        loss, breakdown = total_loss(model, batch, chains, np.random.default_rng(0))
        assert math.isfinite(breakdown["total"])
        assert breakdown["denoise"] > 0
        assert breakdown["n_chain"] >= 1
        assert breakdown["total"] == pytest.approx(
            breakdown["denoise"]
            + small_run_config.lambda_contrast * breakdown["contrast"]
            + small_run_config.lambda_chain * breakdown["chain_text"],
            rel=1e-5,
        )

    def test_chain_terms_masked_without_chains(self, small_run_config, tiny_dataset):
        torch.manual_seed(0)
        vocab = Vocab.default()
        model = CausalPixModel(small_run_config, vocab)
        plain = [s for s in tiny_dataset if s.record.chain is None][:4]
        batch = make_batch(plain, vocab, {})
        _, breakdown = total_loss(model, batch, [], np.random.default_rng(0))
        assert breakdown["n_chain"] == 0
        assert breakdown["contrast"] == 0.0 and breakdown["chain_text"] == 0.0


class TestTrainLoop:
    def test_two_steps_and_history(self, small_run_config, tiny_dataset, tmp_path):
        model, history = train(small_run_config, tiny_dataset, tmp_path, log=lambda *_: None)
        assert (tmp_path / "ckpt_final.pt").exists()
        assert (tmp_path / "history.json").exists()
        assert (tmp_path / "config.txt").exists()
        assert len(history) == 2
        assert all(math.isfinite(h["total"]) for h in history)

    def test_bit_identical_across_runs(self, small_run_config, tiny_dataset, tmp_path):
        m1, _ = train(small_run_config, tiny_dataset, tmp_path / "a", log=lambda *_: None)
        m2, _ = train(small_run_config, tiny_dataset, tmp_path / "b", log=lambda *_: None)
        s1, s2 = m1.state_dict(), m2.state_dict()
        assert all(torch.equal(s1[k], s2[k]) for k in s1)

    def test_seed_changes_weights(self, small_run_config, tiny_dataset, tmp_path):
        other = dataclasses.replace(small_run_config, seed=1)
        m1, _ = train(small_run_config, tiny_dataset, tmp_path / "a", log=lambda *_: None)
        m2, _ = train(other, tiny_dataset, tmp_path / "b", log=lambda *_: None)
        s1, s2 = m1.state_dict(), m2.state_dict()
        assert any(not torch.equal(s1[k], s2[k]) for k in s1)


class TestCheckpoint:
    @pytest.fixture(scope="class")
    def trained(self, small_run_config, tiny_dataset, tmp_path_factory):
        out = tmp_path_factory.mktemp("ckpt")
        model, _ = train(small_run_config, tiny_dataset, out, log=lambda *_: None)
        return model, out / "ckpt_final.pt", small_run_config

    def test_roundtrip_exact(self, trained):
        model, path, cfg = trained
        again, header = load_checkpoint(path, expected=cfg)
        s1, s2 = model.state_dict(), again.state_dict()
        assert all(torch.equal(s1[k], s2[k]) for k in s1)
        assert header["config_hash"] == config_hash(cfg)

    def test_hash_mismatch_detected(self, trained):
        _, path, cfg = trained
        other = dataclasses.replace(cfg, dim_ctx=cfg.dim_ctx * 2)
        with pytest.raises(ConfigHashMismatch):
            load_checkpoint(path, expected=other)

    def test_hash_mismatch_override(self, trained):
        _, path, cfg = trained
        other = dataclasses.replace(cfg, dim_ctx=cfg.dim_ctx * 2)
        model, _ = load_checkpoint(path, expected=other, allow_config_mismatch=True)
        assert model.cfg.dim_ctx == cfg.dim_ctx  # checkpoint config wins

    def test_corrupt_payload_detected(self, trained, tmp_path):
        _, path, _ = trained
        raw = bytearray(path.read_bytes())
        raw[-10] ^= 0xFF
        bad = tmp_path / "bad.pt"
        bad.write_bytes(bytes(raw))
        with pytest.raises(CorruptFile):
            load_checkpoint(bad)

    def test_garbage_file_detected(self, tmp_path):
        bad = tmp_path / "garbage.pt"
        bad.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CorruptFile):
            load_checkpoint(bad)


class TestLoadDataset:
    def test_reads_written_dataset(self, tmp_path):
        from causalpix.world.dataset import make_dataset

        make_dataset(tmp_path, 6, seed=0, canvas_size=32)
        samples = load_dataset(tmp_path)
        assert len(samples) == 6
        assert samples[0].init.shape == (32, 32, 3)
        assert samples[0].init.dtype == np.uint8
