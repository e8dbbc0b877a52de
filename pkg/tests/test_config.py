import pytest

from swad.config import ConfigError, default_k_grid, parse_config

MINIMAL = """\
[dataset]
kind = idx
train_images = a
train_labels = b
test_images = c
test_labels = d
"""


def write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


class TestParsing:
    def test_minimal_with_defaults(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL))
        assert cfg.model.latent_dim == 128
        assert cfg.training.lr == 1e-3
        assert cfg.training.batch_size == 512
        assert cfg.training.seeds == (1, 2, 3, 4, 5)
        assert cfg.dataset.normal_class == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.cfg")

    def test_full_sections(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL + """\
[model]
latent_dim = 16
hidden_dim = 32
fm_hidden = 8,4
[training]
lr = 0.01
seeds = 7
monitor_k = 4
monitor_tau = 0.5
[sweep]
k_grid = 2,4,8
tau_grid = 0.1,0.9
[output]
out_dir = /tmp/somewhere
"""))
        assert cfg.model.fm_hidden == (8, 4)
        assert cfg.training.seeds == (7,)
        assert cfg.training.monitor_k == 4
        assert cfg.k_grid() == (2, 4, 8)
        assert cfg.tau_grid() == (0.1, 0.9)
        assert cfg.out_dir == "/tmp/somewhere"

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config section"):
            parse_config(write(tmp_path, MINIMAL + "[extra]\nx = 1\n"))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key 'latentdim'"):
            parse_config(write(tmp_path, MINIMAL + "[model]\nlatentdim = 4\n"))

    def test_bad_value_type(self, tmp_path):
        with pytest.raises(ConfigError, match="latent_dim"):
            parse_config(write(tmp_path, MINIMAL + "[model]\nlatent_dim = big\n"))


class TestValidation:
    @pytest.mark.parametrize("snippet,pattern", [
        ("[training]\nlr = 0\n", "lr"),
        ("[training]\nbatch_size = 0\n", "batch_size"),
        ("[training]\nseeds = \n", "seeds"),
        ("[training]\nmonitor_k = 4\n", "monitor_k and monitor_tau"),
        ("[model]\nlatent_dim = 0\n", "dims"),
        ("[model]\nleaky_slope = 1.5\n", "leaky_slope"),
        ("[model]\noutput_activation = relu\n", "output_activation"),
        ("[sweep]\nk_grid = 500\n", "k grid"),
        ("[sweep]\ntau_grid = 1.5\n", "tau grid"),
    ])
    def test_invalid_values(self, tmp_path, snippet, pattern):
        with pytest.raises(ConfigError, match=pattern):
            parse_config(write(tmp_path, MINIMAL + snippet))

    def test_invalid_val_fraction(self, tmp_path):
        text = MINIMAL.replace("kind = idx", "kind = idx\nval_fraction = 0.7")
        with pytest.raises(ConfigError, match="val_fraction"):
            parse_config(write(tmp_path, text))

    def test_duplicate_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, MINIMAL + "[dataset]\nnormal_class = 1\n"))

    def test_dataset_kind_requirements(self, tmp_path):
        with pytest.raises(ConfigError, match="requires"):
            parse_config(write(tmp_path, "[dataset]\nkind = csv\n"))
        with pytest.raises(ConfigError, match="one of"):
            parse_config(write(tmp_path, "[dataset]\nkind = parquet\n"))


class TestDefaults:
    def test_default_k_grid_fractions(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL))
        assert cfg.k_grid() == (8, 16, 32, 64, 96, 128)

    def test_default_k_grid_small_latent(self):
        assert default_k_grid(4) == (1, 2, 3, 4)

    def test_default_tau_grid(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL))
        grid = cfg.tau_grid()
        assert len(grid) == 11
        assert grid[0] == 0.0 and grid[-1] == 1.0

    def test_explicit_k_grid_clamped_to_latent(self, tmp_path):
        cfg = parse_config(write(tmp_path, MINIMAL + "[sweep]\nk_grid = 2,64,128\n"))
        assert cfg.k_grid(latent_dim=16) == (2,)

    def test_config_hash_stability(self, tmp_path):
        a = parse_config(write(tmp_path, MINIMAL))
        b = parse_config(write(tmp_path, MINIMAL))
        assert a.sha256() == b.sha256()
        c = parse_config(write(tmp_path, MINIMAL + "[model]\nlatent_dim = 2\n"))
        assert c.sha256() != a.sha256()
