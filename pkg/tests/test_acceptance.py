"""Acceptance criteria 1-8.

Each test prints one ``CRITERION n PASS|FAIL`` line, followed by its
individual checks with signed margins. Tolerances live in
:mod:`mibracket.validation` and are fixed there:

1. fusion rows within +-0.005 nats
2. Gaussian grid, rho in {0, 0.3, 0.6, 0.9}, N = 2000, 10 seeds, >= 90 % per
   cell: KSG +-0.08, MINE [t - 0.15, t + 0.05], CLUB [t - 0.05, t + 0.25],
   Final +-0.12, each cell <= 60 s
3. independence null: |Final| <= 0.08 and early stop by epoch 30 in >= 80 %
4. gradient audit: relative error < 1e-4 at 5 points
5. kd-tree vs brute force: 20 datasets, N <= 300, identical
6. clamp: y = x, 100 epochs, log-variance in [-6, 2], finite bound
7. attribution: A_source > 0.9, swap complement and sum to 1e-12, fixed-seed CI
8. byte-identical report body under one master seed
"""

import pytest

from mibracket import validation


def report(capsys, number, title, checks):
    ok = all(c.passed for c in checks)
    with capsys.disabled():
        print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {title}")
        for c in checks:
            print("    " + c.line())
    return ok


def test_criterion_1_fusion_table(capsys):
    checks = validation.check_fusion_table2()
    assert report(capsys, 1, "fusion arithmetic reproduces the four table rows", checks)


@pytest.fixture(scope="module")
def gaussian_grid():
    return validation.check_gaussian_grid()


def test_criterion_2_gaussian_grid(capsys, gaussian_grid):
    checks, _ = gaussian_grid
    failed = [c.line() for c in checks if not c.passed]
    assert report(capsys, 2, "Gaussian oracle grid", checks), "\n".join(failed)


def test_criterion_3_independence_null(capsys):
    checks = validation.check_independence_null()
    assert report(capsys, 3, "independence null and early stopping", checks)


def test_criterion_4_gradient_audit(capsys):
    checks = validation.check_gradients()
    assert report(capsys, 4, "finite-difference gradient audit", checks)


def test_criterion_5_ksg_equivalence(capsys):
    checks = validation.check_ksg_equivalence()
    assert report(capsys, 5, "kd-tree and brute-force KSG agree", checks)


def test_criterion_6_clamping(capsys):
    checks = validation.check_clamping()
    assert report(capsys, 6, "log-variance clamp under y = x", checks)


def test_criterion_7_attribution(capsys):
    checks = validation.check_attribution()
    assert report(capsys, 7, "source/filter attribution", checks)


def test_criterion_8_determinism(capsys):
    checks = validation.check_determinism()
    assert report(capsys, 8, "byte-identical report under one master seed", checks)
