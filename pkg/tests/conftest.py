#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
测试共享的函数构造器与 hypothesis 策略
"""

from typing import Tuple

import numpy as np
import pytest
from hypothesis import strategies as st

from src.core.linalg import SymMatrix, psd_stack
from src.core.quasiconvex import MaxQuadFunction, Quadratic
from src.models.geometry import Box


def abs_function() -> MaxQuadFunction:
    """|x|（n=1）"""
    return MaxQuadFunction([Quadratic(0.0, [1.0], [[0.0]]), Quadratic(0.0, [-1.0], [[0.0]])])


def half_norm_sq(n: int, sign: float = 1.0, c: float = 0.0) -> MaxQuadFunction:
    """c + sign·½|y|²"""
    return MaxQuadFunction([Quadratic(c, np.zeros(n), SymMatrix.identity(n, sign))])


def constant(n: int, c: float) -> MaxQuadFunction:
    return MaxQuadFunction([Quadratic(c, np.zeros(n), SymMatrix.zeros(n))])


def random_max_quad(rng: np.random.Generator, n: int, m: int, scale: float = 1.0) -> MaxQuadFunction:
    """一般的随机二次最大值"""
    pieces = []
    for _ in range(m):
        g = rng.standard_normal((n, n)) * scale
        pieces.append(Quadratic(rng.normal(0.0, scale), rng.normal(0.0, scale, n), 0.5 * (g + g.T)))
    return MaxQuadFunction(pieces)


def random_convex_max_quad(rng: np.random.Generator, n: int, m: int, shift: float = 0.0) -> MaxQuadFunction:
    """各片 Hessian ⪰ shift·I 的随机二次最大值"""
    As = psd_stack(n, 1.0, rng, m) + shift * np.eye(n)
    return MaxQuadFunction([
        Quadratic(rng.normal(), rng.normal(0.0, 1.0, n), As[i]) for i in range(m)
    ])


def kinked_instance(rng: np.random.Generator, n: int) -> Tuple[MaxQuadFunction, np.ndarray, np.ndarray, SymMatrix]:
    """
    靠近折线的两片实例：w = q + max(0, ⟨a, y − z⟩)，|z| = 0.2

    x0 = 0 处 (Dq(0), D²q + 3I) 是 B_{1/2}(0) 上的严格上接触 jet。
    """
    g = rng.standard_normal((n, n)) * 0.5
    A = SymMatrix(0.5 * (g + g.T))
    p = rng.normal(0.0, 0.5, n)
    c = rng.normal()
    a = rng.standard_normal(n)
    a /= np.linalg.norm(a)
    z = 0.2 * a
    q0 = Quadratic(c, p, A)
    q1 = Quadratic(c - a @ z, p + a, A)
    return MaxQuadFunction([q0, q1]), np.zeros(n), p, A + SymMatrix.identity(n, 3.0)


# double_kink 的接触 jet Hessian 与半径序列：折点落在每个球内，接触集占比很小
THIN_CONTACT_A0 = 3.8
THIN_SCHEDULE = [0.5, 0.45, 0.4, 0.35, 0.3, 0.28, 0.26]


def double_kink(z: float = 0.2) -> MaxQuadFunction:
    """½y² + max(0, y − z, −y − z)（n=1），x0 = 0 处光滑，两侧折点距离 z"""
    return MaxQuadFunction([
        Quadratic(0.0, [0.0], [[1.0]]),
        Quadratic(-z, [1.0], [[1.0]]),
        Quadratic(-z, [-1.0], [[1.0]]),
    ])

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def unit_box_1d() -> Box:
    return Box.cube(1)


@pytest.fixture
def unit_box_2d() -> Box:
    return Box.cube(2)


_entry = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


@st.composite
def sym_matrices(draw, n=None):
    """随机对称矩阵（维数 1..4）"""
    dim = draw(st.integers(min_value=1, max_value=4)) if n is None else n
    rows = draw(st.lists(st.lists(_entry, min_size=dim, max_size=dim), min_size=dim, max_size=dim))
    return SymMatrix(rows)


@st.composite
def matrix_pairs(draw):
    dim = draw(st.integers(min_value=1, max_value=4))
    return draw(sym_matrices(dim)), draw(sym_matrices(dim))
