"""Embedding network mapping sensor windows to d-dimensional vectors.

The architecture is pluggable behind one ``embed`` contract: a dense
reference (flatten -> hidden ReLU layers -> linear head) and a temporal
1-D convolution variant (conv -> ReLU -> mean-pool over time -> linear
head). Both use the same scaled-uniform fan-in initialization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    channels: int
    timesteps: int
    embedding_dim: int = 64
    hidden: tuple[int, ...] = (128,)
    arch: str = "dense"            # "dense" | "temporal_conv"
    conv_filters: int = 32
    kernel_size: int = 5
    activation: str = "relu"       # "relu" | "tanh"

    def __post_init__(self):
        if self.channels < 1 or self.timesteps < 1 or self.embedding_dim < 1:
            raise ContractViolation("channels, timesteps and embedding_dim must be positive")
        if self.arch not in ("dense", "temporal_conv"):
            raise ContractViolation(f"unknown architecture '{self.arch}'")
        if self.activation not in ("relu", "tanh"):
            raise ContractViolation(f"unknown activation '{self.activation}'")
        if self.arch == "temporal_conv" and self.kernel_size > self.timesteps:
            raise ContractViolation("kernel_size cannot exceed timesteps")


def _uniform_fanin(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Encoder:
    """Trainable embedding function; a pure function of (params, batch)."""

    def __init__(self, config: EncoderConfig, params: list[Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: EncoderConfig, seed: int) -> "Encoder":
        """Deterministic fan-in-scaled uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        params: list[Tensor] = []
        if config.arch == "dense":
            widths = [config.channels * config.timesteps, *config.hidden, config.embedding_dim]
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                params.append(Tensor(_uniform_fanin(rng, (fan_in, fan_out), fan_in), requires_grad=True))
                params.append(Tensor(np.zeros(fan_out), requires_grad=True))
        else:
            fan_in = config.channels * config.kernel_size
            params.append(Tensor(
                _uniform_fanin(rng, (config.conv_filters, config.channels, config.kernel_size), fan_in),
                requires_grad=True))
            params.append(Tensor(np.zeros(config.conv_filters), requires_grad=True))
            widths = [config.conv_filters, *config.hidden, config.embedding_dim]
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                params.append(Tensor(_uniform_fanin(rng, (fan_in, fan_out), fan_in), requires_grad=True))
                params.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return cls(config, params)

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params)

    def _activate(self, x: Tensor) -> Tensor:
        return ad.relu(x) if self.config.activation == "relu" else ad.tanh(x)

    def embed(self, windows: np.ndarray) -> Tensor:
        """Embed a (n, channels, timesteps) batch; differentiable w.r.t. params."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[1:] != (self.config.channels, self.config.timesteps):
            raise ContractViolation(
                f"window batch shape {windows.shape} does not match input spec "
                f"(n, {self.config.channels}, {self.config.timesteps})"
            )
        if windows.shape[0] == 0:
            raise ContractViolation("cannot embed an empty batch")
        x = Tensor(windows)
        idx = 0
        if self.config.arch == "temporal_conv":
            x = self._activate(ad.conv1d(x, self.params[0], self.params[1]))
            x = x.mean(axis=2)  # pool over time -> (n, filters)
            idx = 2
        else:
            x = x.reshape((windows.shape[0], -1))
        dense = self.params[idx:]
        n_layers = len(dense) // 2
        for layer in range(n_layers):
            x = x @ dense[2 * layer] + dense[2 * layer + 1]
            if layer < n_layers - 1:
                x = self._activate(x)
        return x

    def embed_array(self, windows: np.ndarray) -> np.ndarray:
        """Forward pass without building a tape (for prototype bookkeeping)."""
        with ad.no_grad():
            return self.embed(windows).data

    def clone(self) -> "Encoder":
        params = [Tensor(p.data.copy(), requires_grad=True) for p in self.params]
        return Encoder(self.config, params)
