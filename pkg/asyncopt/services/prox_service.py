"""Proximal operators for the regularizer catalog"""

from typing import Sequence

import numpy as np

from asyncopt.core.errors import ConfigError
from asyncopt.models.problem import Regularizer
from asyncopt.models.schemas import RegularizerKind


class ProxService:
    """Evaluation, prox and subgradient recovery for separable regularizers"""

    @staticmethod
    def value(reg: Regularizer, x: np.ndarray) -> float:
        """r(x); +inf outside the box of an indicator"""
        if reg.kind == RegularizerKind.ZERO:
            return 0.0
        if reg.kind == RegularizerKind.L1:
            return float(reg.lam * np.abs(x).sum())
        if reg.kind == RegularizerKind.BOX:
            ProxService._check_length(reg.lo, x)
            inside = np.all(x >= reg.lo) and np.all(x <= reg.hi)
            return 0.0 if inside else float("inf")
        total = 0.0
        for part, block in zip(reg.parts, ProxService._slices(reg.block_sizes, x)):
            total += ProxService.value(part, x[block])
        return total

    @staticmethod
    def prox(reg: Regularizer, gamma: float, v: np.ndarray) -> np.ndarray:
        """
        argmin_y gamma * r(y) + 0.5 * ||y - v||^2

        Args:
            reg: Regularizer
            gamma: Positive prox scaling
            v: Input point

        Returns:
            The unique minimizer (a new array)
        """
        if not gamma > 0:
            raise ValueError(f"prox scaling must be positive, got {gamma}")
        if reg.kind == RegularizerKind.ZERO:
            return np.array(v, dtype=np.float64, copy=True)
        if reg.kind == RegularizerKind.L1:
            # |v_i| == gamma*lam lands on exactly zero
            return np.sign(v) * np.maximum(np.abs(v) - gamma * reg.lam, 0.0)
        if reg.kind == RegularizerKind.BOX:
            ProxService._check_length(reg.lo, v)
            return np.clip(v, reg.lo, reg.hi)
        return np.concatenate(
            [
                ProxService.prox(part, gamma, v[block])
                for part, block in zip(reg.parts, ProxService._slices(reg.block_sizes, v))
            ]
        )

    @staticmethod
    def prox_block(
        reg: Regularizer,
        gamma: float,
        block: slice,
        v: np.ndarray,
        partition: Sequence[int],
    ) -> np.ndarray:
        """
        Prox of the block term r^(j) on the coordinates ``block``

        Args:
            reg: Regularizer of the full vector
            gamma: Positive prox scaling
            block: Coordinates of block j under ``partition``
            v: Block input of length block.stop - block.start
            partition: Active block partition

        Returns:
            prox_{gamma r^(j)}(v)
        """
        if not reg.is_separable_under(tuple(partition)):
            raise ConfigError(
                "Regularizer does not separate over the block partition; "
                "Async-BCD is not applicable"
            )
        if v.shape != (block.stop - block.start,):
            raise ValueError(f"block input has shape {v.shape}, block is {block}")
        return ProxService.prox(ProxService.restrict(reg, block), gamma, v)

    @staticmethod
    def recover_subgradient(
        reg: Regularizer, gamma: float, pre_prox: np.ndarray, post_prox: np.ndarray
    ) -> np.ndarray:
        """xi = (pre - post) / gamma, an element of the subdifferential of r at post"""
        if not gamma > 0:
            raise ValueError(f"prox scaling must be positive, got {gamma}")
        return (pre_prox - post_prox) / gamma

    @staticmethod
    def restrict(reg: Regularizer, block: slice) -> Regularizer:
        """The regularizer acting on coordinates [block.start, block.stop)"""
        if reg.kind in (RegularizerKind.ZERO, RegularizerKind.L1):
            return reg
        if reg.kind == RegularizerKind.BOX:
            return Regularizer.box(reg.lo[block], reg.hi[block])
        start = 0
        for part, size in zip(reg.parts, reg.block_sizes):
            stop = start + size
            if start <= block.start and block.stop <= stop:
                return ProxService.restrict(
                    part, slice(block.start - start, block.stop - start)
                )
            start = stop
        raise ConfigError(f"Block {block} straddles two regularizer parts")

    @staticmethod
    def _slices(block_sizes: Sequence[int], x: np.ndarray):
        if sum(block_sizes) != x.shape[0]:
            raise ValueError(
                f"separable_list covers {sum(block_sizes)} coordinates, input has {x.shape[0]}"
            )
        start = 0
        for size in block_sizes:
            yield slice(start, start + size)
            start += size

    @staticmethod
    def _check_length(bounds: np.ndarray, x: np.ndarray) -> None:
        if bounds.shape != x.shape:
            raise ValueError(f"box bounds have shape {bounds.shape}, input has {x.shape}")
