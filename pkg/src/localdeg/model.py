"""Frame-level quality network: conv encoder over log-power spectra feeding
two decoder heads.

The score head produces per-frame quality estimates pooled last into the
utterance estimate; the embedding head produces unit-norm frame embeddings
before and after a linear projection. Everything runs at the 50 Hz frame
grid, so outputs align 1:1 with :mod:`localdeg.features` frames.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import fileio
from .autodiff import BatchNormState, Tensor
from .corpus import Waveform
from .errors import InputError
from .features import FRAME_SAMPLES, frame_span, log_power_spectra

PAPER_RECEPTIVE_FIELD_FRAMES = 21  # 11 + 7 + 5 - 2, about 400 ms at 50 Hz

EMBEDDING_KINDS = ("x", "zmos", "zscl", "ztilde")


@dataclass
class ModelConfig:
    n_bins: int = 64
    enc_channels: tuple = (64, 64, 64, 64)
    enc_kernels: tuple = (5, 3, 3, 3)
    dec_hidden: tuple = (64, 64, 32)
    dec_kernels: tuple = (11, 7, 5)
    proj_dim: int = 32
    leaky_slope: float = 0.01
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    paper_scale: bool = False

    @classmethod
    def paper(cls):
        return cls(
            dec_hidden=(256, 256, 64),
            dec_kernels=(11, 7, 5),
            proj_dim=128,
            paper_scale=True,
        )

    @classmethod
    def toy(cls):
        """Tiny configuration for gradient checks (a few thousand params)."""
        return cls(
            n_bins=16,
            enc_channels=(8, 8),
            enc_kernels=(5, 3),
            dec_hidden=(8, 8, 4),
            dec_kernels=(5, 3, 3),
            proj_dim=4,
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("enc_channels", "enc_kernels", "dec_hidden", "dec_kernels"):
            d[key] = tuple(d[key])
        return cls(**d)

    @property
    def decoder_receptive_field(self):
        return sum(self.dec_kernels) - len(self.dec_kernels) + 1

    @property
    def receptive_field(self):
        enc = sum(self.enc_kernels) - len(self.enc_kernels) + 1
        return enc + self.decoder_receptive_field - 1


@dataclass
class ModelOutput:
    """Per-utterance forward results; tensors unless produced under no_grad."""

    x: Tensor  # encoder features [L, D_enc]
    z_mos: Tensor  # score-decoder bottleneck [L, D_Z]
    q_hat: Tensor  # frame scores [L]
    y_hat: Tensor  # utterance score (mean of q_hat)
    z_scl: Tensor  # unit-norm embedding-decoder bottleneck [L, D_Z]
    z_tilde: Tensor  # unit-norm projected embeddings [L, D_P]

    def embedding(self, kind: str) -> np.ndarray:
        arr = {
            "x": self.x,
            "zmos": self.z_mos,
            "zscl": self.z_scl,
            "ztilde": self.z_tilde,
        }[kind]
        return arr.data


class _ConvBlock:
    def __init__(self, rng, c_in, c_out, kernel, cfg, name):
        std = np.sqrt(2.0 / (kernel * c_in))
        self.w = Tensor(rng.normal(0.0, std, (kernel, c_in, c_out)), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.gamma = Tensor(np.ones(c_out), requires_grad=True)
        self.beta = Tensor(np.zeros(c_out), requires_grad=True)
        self.bn = BatchNormState(c_out, cfg.bn_momentum, cfg.bn_eps)
        self.slope = cfg.leaky_slope
        self.name = name

    def forward_list(self, xs, training, update_running=True):
        ys = [ad.conv1d(x, self.w, self.b) for x in xs]
        sizes = [y.shape[0] for y in ys]
        cat = ys[0] if len(ys) == 1 else ad.concat_rows(ys)
        cat = ad.batch_norm(cat, self.gamma, self.beta, self.bn, training, update_running)
        cat = ad.leaky_relu(cat, self.slope)
        if len(ys) == 1:
            return [cat]
        out, off = [], 0
        for n in sizes:
            out.append(ad.slice_rows(cat, off, off + n))
            off += n
        return out

    def parameters(self):
        return [
            (f"{self.name}.w", self.w),
            (f"{self.name}.b", self.b),
            (f"{self.name}.gamma", self.gamma),
            (f"{self.name}.beta", self.beta),
        ]

    def states(self):
        return [
            (f"{self.name}.running_mean", self.bn.mean),
            (f"{self.name}.running_var", self.bn.var),
            (f"{self.name}.steps", np.array(float(self.bn.steps))),
        ]


class Model:
    """Encoder plus score and embedding decoders, all trainable tensors."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        if cfg.paper_scale:
            assert cfg.decoder_receptive_field == PAPER_RECEPTIVE_FIELD_FRAMES, (
                "paper-scale decoder receptive field must be "
                f"{PAPER_RECEPTIVE_FIELD_FRAMES} frames"
            )
        self.cfg = cfg
        rng = np.random.default_rng(seed)

        self.encoder = []
        c_in = cfg.n_bins
        for i, (c_out, k) in enumerate(zip(cfg.enc_channels, cfg.enc_kernels)):
            self.encoder.append(_ConvBlock(rng, c_in, c_out, k, cfg, f"enc.{i}"))
            c_in = c_out
        d_enc = c_in

        def make_decoder(prefix):
            blocks = []
            ci = d_enc
            for i, (c_out, k) in enumerate(zip(cfg.dec_hidden, cfg.dec_kernels)):
                blocks.append(_ConvBlock(rng, ci, c_out, k, cfg, f"{prefix}.{i}"))
                ci = c_out
            return blocks, ci

        self.mos_decoder, d_z = make_decoder("mos")
        self.mos_head_w = Tensor(
            rng.normal(0.0, np.sqrt(1.0 / d_z), (d_z, 1)), requires_grad=True
        )
        self.mos_head_b = Tensor(np.zeros(1), requires_grad=True)

        self.scl_decoder, _ = make_decoder("scl")
        self.proj_w = Tensor(
            rng.normal(0.0, np.sqrt(1.0 / d_z), (d_z, cfg.proj_dim)), requires_grad=True
        )

    # -- parameter plumbing -------------------------------------------------

    def parameters(self):
        out = []
        for block in self.encoder + self.mos_decoder + self.scl_decoder:
            out.extend(block.parameters())
        out.append(("mos.head.w", self.mos_head_w))
        out.append(("mos.head.b", self.mos_head_b))
        out.append(("scl.proj.w", self.proj_w))
        return out

    def states(self):
        out = []
        for block in self.encoder + self.mos_decoder + self.scl_decoder:
            out.extend(block.states())
        return out

    @property
    def n_params(self):
        return sum(t.data.size for _, t in self.parameters())

    def zero_grad(self):
        for _, t in self.parameters():
            t.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward_batch(self, signals, training: bool = False, update_running: bool = True):
        """Run a batch jointly so training-mode normalization sees all frames."""
        xs = []
        for sig in signals:
            samples = sig.samples if isinstance(sig, Waveform) else np.asarray(sig)
            if samples.shape[0] < FRAME_SAMPLES:
                raise InputError("signal shorter than one frame")
            xs.append(Tensor(log_power_spectra(samples, self.cfg.n_bins)))

        for block in self.encoder:
            xs = block.forward_list(xs, training, update_running)
        feats = xs

        zs = list(feats)
        for block in self.mos_decoder:
            zs = block.forward_list(zs, training, update_running)
        outputs = []
        es = list(feats)
        for block in self.scl_decoder:
            es = block.forward_list(es, training, update_running)

        for x, z_mos, z_raw in zip(feats, zs, es):
            q_col = ad.add_bias(ad.matmul(z_mos, self.mos_head_w), self.mos_head_b)
            q_hat = ad.reshape(q_col, (q_col.shape[0],))
            y_hat = ad.mean_all(q_hat)
            z_scl = ad.normalize_rows(z_raw)
            z_tilde = ad.normalize_rows(ad.matmul(z_scl, self.proj_w))
            outputs.append(ModelOutput(x, z_mos, q_hat, y_hat, z_scl, z_tilde))
        return outputs

    def forward(self, signal, training: bool = False) -> ModelOutput:
        return self.forward_batch([signal], training)[0]

    def slice_forward(self, signal, l0: int, delta_l: int, training: bool = False,
                      update_running: bool = False) -> ModelOutput:
        """Forward on the cropped waveform covering frames [l0, l0 + delta_l)."""
        samples = signal.samples if isinstance(signal, Waveform) else np.asarray(signal)
        n_frames = samples.shape[0] // FRAME_SAMPLES
        if not (0 <= l0 and delta_l >= 1 and l0 + delta_l <= n_frames):
            raise InputError(
                f"slice [{l0}, {l0 + delta_l}) out of range for {n_frames} frames"
            )
        on = frame_span(l0)[0]
        off = frame_span(l0 + delta_l - 1)[1]
        crop = samples[on:off]
        return self.forward_batch([crop], training, update_running)[0]

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        blobs = [(name, t.data) for name, t in self.parameters()]
        blobs += [(f"state.{name}", arr) for name, arr in self.states()]
        fileio.write_checkpoint(path, {"model": self.cfg.to_dict()}, blobs)

    @classmethod
    def load(cls, path):
        config, blobs = fileio.read_checkpoint(path)
        model = cls(ModelConfig.from_dict(config["model"]))
        params = dict(model.parameters())
        blocks = {
            b.name: b for b in model.encoder + model.mos_decoder + model.scl_decoder
        }
        for name, arr in blobs:
            if name.startswith("state."):
                block_name, stat = name[len("state.") :].rsplit(".", 1)
                bn = blocks[block_name].bn
                if stat == "running_mean":
                    bn.mean = arr
                elif stat == "running_var":
                    bn.var = arr
                elif stat == "steps":
                    bn.steps = int(arr.reshape(-1)[0])
            else:
                params[name].data = arr
        return model
