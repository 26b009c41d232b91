import numpy as np

from faultcast.rng import Stream, derive, fnv1a64, mix64

# First three raw outputs of Stream(42); pins the stream definition so any
# accidental change to the generator breaks loudly.
STREAM42_HEAD = [
    13679457532755275413,
    2949826092126892291,
    5139283748462763858,
]


def test_stream_head_is_pinned():
    s = Stream(42)
    assert [s.next_u64() for _ in range(3)] == STREAM42_HEAD


def test_scalar_and_block_paths_agree():
    scalar = Stream(123)
    values = [scalar.next_u64() for _ in range(17)]
    block = Stream(123).u64_block(17)
    assert values == [int(v) for v in block]


def test_block_continues_after_scalar_draws():
    s = Stream(5)
    first = s.next_u64()
    rest = s.u64_block(3)
    reference = Stream(5).u64_block(4)
    assert [first] + [int(v) for v in rest] == [int(v) for v in reference]


def test_uniform_range_and_determinism():
    s = Stream(9)
    values = [s.uniform() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert values == [Stream(9).uniform() for _ in range(1)] + values[1:]


def test_randint_in_range_and_covers():
    s = Stream(11)
    draws = [s.randint(7) for _ in range(2000)]
    assert set(draws) == set(range(7))


def test_randint_block_matches_scalar():
    block = Stream(3).randint_block(10, 50)
    scalar = Stream(3)
    assert [scalar.randint(10) for _ in range(50)] == [int(v) for v in block]


def test_normals_moments():
    z = Stream(1).normals(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


def test_normals_deterministic_and_pair_consumed():
    a = Stream(77).normals(9)
    b = Stream(77).normals(9)
    assert np.array_equal(a, b)
    s = Stream(77)
    s.normals(9)
    assert s.counter == 10  # 5 Box-Muller pairs consume 10 raw draws


def test_subset_uniform_without_replacement():
    s = Stream(21)
    picks = s.subset(list(range(10)), 4)
    assert len(set(picks)) == 4
    counts = np.zeros(6)
    for i in range(6000):
        chosen = Stream(derive(21, i)).subset(list(range(6)), 2)
        for c in chosen:
            counts[c] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 6) < 0.02)


def test_derive_changes_with_any_key():
    base = derive(42, "eval", 3, 7)
    assert base != derive(42, "eval", 3, 8)
    assert base != derive(42, "eval", 4, 7)
    assert base != derive(42, "data", 3, 7)
    assert base != derive(43, "eval", 3, 7)
    assert derive(42, "eval", 3, 7) == base


def test_mix64_and_fnv_are_stable():
    assert mix64(0) == 0
    assert mix64(1) != 1
    assert fnv1a64(b"windows") == fnv1a64(b"windows")
    assert fnv1a64(b"windows") != fnv1a64(b"scenario")
