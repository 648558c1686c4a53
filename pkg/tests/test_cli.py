import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfreeconv import cli
from cfreeconv.convolution import CFreePair
from cfreeconv.expr import ParseError, evaluate, parse, strip_positions, to_source
from cfreeconv.measure import Measure, arcsine, levy_distance

MALFORMED = [
    ("fconv(semicircle(0,2)", 1, 22),
    ("fconv(semicirc(0,2), delta(0))", 1, 7),
    ("pair(delta(0))", 1, 1),
    ("fconv(delta(0),, delta(1))", 1, 16),
    ("cfconv(delta(0), delta(1))", 1, 8),
    ("fconv(\n  semicircle(0, 2),\n  bernoulli(1) x)", 3, 16),
    ("delta(1) $", 1, 10),
]


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_examples():
    e = parse("fconv(semicircle(0,2), semicircle(0,2))")
    assert e.name == "fconv" and [a.name for a in e.args] == ["semicircle", "semicircle"]
    e = parse("cfconv(pair(bernoulli(1), delta(0)), pair(bernoulli(1), delta(0)))")
    assert e.name == "cfconv" and e.kind == "pair"
    assert parse(" delta ( 1 ) ").args[0].value == 1.0


@pytest.mark.parametrize("src, line, col", MALFORMED)
def test_error_positions(src, line, col):
    with pytest.raises(ParseError) as ei:
        parse(src)
    assert (ei.value.line, ei.value.col) == (line, col)
    assert ei.value.caret().endswith(" " * (col - 1) + "^")


numbers = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 6))
leaves = st.one_of(
    st.builds(lambda v: f"delta({v!r})", numbers),
    st.builds(lambda v: f"bernoulli({abs(v) + 0.1!r})", numbers),
    st.builds(lambda c, r: f"semicircle({c!r}, {abs(r) + 0.1!r})", numbers, numbers),
    st.just("gaussian()"),
)


def measures(depth):
    if depth == 0:
        return leaves
    sub = measures(depth - 1)
    return st.one_of(
        leaves,
        st.builds(lambda op, xs: f"{op}({', '.join(xs)})", st.sampled_from(["cconv", "bconv", "fconv"]),
                  st.lists(sub, min_size=2, max_size=3)),
        st.builds(lambda x, a, b: f"affine({x}, {a!r}, {b!r})", sub, numbers, numbers),
    )


@given(measures(3))
def test_round_trip(src):
    e = parse(src)
    text = to_source(e)
    again = parse(text)
    assert strip_positions(again) == strip_positions(e)
    assert to_source(again) == text


def test_evaluate_examples():
    d = evaluate(parse("delta(1)"))
    assert d.atoms == [(1.0, 1.0)]
    b = evaluate(parse("bconv(bernoulli(1), bernoulli(1))"))
    assert [x for x, _ in b.atoms] == pytest.approx([-math.sqrt(2), math.sqrt(2)])
    assert [w for _, w in b.atoms] == pytest.approx([0.5, 0.5])
    f = evaluate(parse("fconv(bernoulli(1), bernoulli(1))"))
    assert levy_distance(f, arcsine(0, 2)) <= 1e-3
    x = np.linspace(-1.5, 1.5, 7)
    assert f.density_at(x) == pytest.approx(1 / (np.pi * np.sqrt(4 - x * x)), rel=1e-2)
    p = evaluate(parse("affine(pair(delta(1), delta(3)), 2, 1)"))
    assert isinstance(p, CFreePair) and p.mu.atoms == [(0.0, 1.0)] and p.nu.atoms == [(1.0, 1.0)]


def test_density_csv(capsys):
    code, out, _ = run(["density", "bconv(bernoulli(1), bernoulli(1))"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# atom,location,mass"
    assert lines[1] == "# atom,-1.41421356237,0.5"
    assert lines[2] == "# atom,1.41421356237,0.5"
    assert lines[3] == "x,density" and len(lines) == 4


def test_convolve_pair_and_json(capsys):
    expr = "cfconv(pair(bernoulli(1), delta(0)), pair(bernoulli(1), delta(0)))"
    code, out, _ = run(["convolve", expr, "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out)
    mu = Measure.from_dict(data["mu"])
    assert [x for x, _ in mu.atoms] == pytest.approx([-math.sqrt(2), math.sqrt(2)])
    assert data["nu"]["atoms"] == [[0.0, 1.0]]
    code, out, _ = run(["convolve", "fconv(semicircle(0, 1), semicircle(0, 1))", "--window=-2,2",
                        "--grid-n", "65"], capsys)
    rows = [r for r in out.splitlines() if not r.startswith("#")]
    assert rows[0] == "x,density,cdf" and len(rows) == 66
    cdf = [float(r.split(",")[2]) for r in rows[1:]]
    assert cdf == sorted(cdf) and cdf[32] == pytest.approx(0.5, abs=1e-4)


def test_transforms(capsys):
    code, out, _ = run(["transforms", "semicircle(0, 2)", "--at", "2j,1+1j"], capsys)
    assert code == 0
    head, first, _ = out.splitlines()
    assert head == "re_z,im_z,re_G,im_G,re_F,im_F,re_E,im_E"
    z = 2j
    g = (z - np.sqrt(z * z - 4)) / 2
    vals = [float(v) for v in first.split(",")]
    assert vals[2] == pytest.approx(g.real, abs=1e-6) and vals[3] == pytest.approx(g.imag, abs=1e-6)
    code, out, _ = run(["transforms", "pair(semicircle(0, 2), semicircle(0, 2))", "--at", "3j",
                        "--format", "json"], capsys)
    phi = json.loads(out)["Phi"][0]
    assert complex(*phi) == pytest.approx(1 / 3j, abs=1e-5)


def test_limit_and_infdiv(tmp_path, capsys):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"family": "degenerate", "n_ladder": [2, 4], "params": [], "shifts": 0}))
    code, out, _ = run(["limit", str(sc), "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"gamma": 0, "sigma": {"atoms": [[0, 1]]}, "gamma2": 0, "sigma2": {"atoms": [[0, 1]]}}))
    code, out, _ = run(["infdiv", str(gen)], capsys)
    assert code == 0 and out.startswith("# accepted,True\n")


def test_stable_commands(tmp_path, capsys):
    f = tmp_path / "f.json"
    f.write_text(json.dumps({"family": "power_high", "a": 0, "b": 1, "alpha": 2}))
    code, out, _ = run(["stable", "evaluate", str(f), "--at", "2j"], capsys)
    assert code == 0 and out.splitlines()[1] == "0,2,0,-0.5"
    code, out, _ = run(["stable", "check", str(f), "--format", "json"], capsys)
    res = json.loads(out)
    assert [r["a"] for r in res] == [0.5, 1.0, 2.0] and all(r["stable"] for r in res)


def test_exit_codes(tmp_path, capsys):
    assert run(["density", "fconv(semicircle(0,2)"], capsys)[0] == 2
    code, _, err = run(["density", "fconv(semicirc(0,2), delta(0))"], capsys)
    assert code == 2 and "column 7" in err
    assert run(["density", "semicircle(0, -1)"], capsys)[0] == 4
    assert run(["convolve", "delta(0)"], capsys)[0] == 4
    assert run(["limit", str(tmp_path / "missing.json")], capsys)[0] == 4
    bad = tmp_path / "heavy.json"
    bad.write_text(json.dumps({"phi": {"family": "constant", "a": 0, "b": 0},
                               "psi": {"family": "power_low", "a": 0, "b": -1, "alpha": 0.3}}))
    assert run(["stable", "construct", str(bad)], capsys)[0] == 3
    with pytest.raises(SystemExit) as ei:
        cli.main(["density", "delta(0)", "--grid-n", "3"])
    assert ei.value.code == 2


def test_output_file(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert run(["density", "delta(0.25)", "--out", str(out)], capsys)[1] == ""
    assert out.read_text() == "# atom,location,mass\n# atom,0.25,1\nx,density\n"


def test_byte_identical_across_processes():
    cmd = [sys.executable, "-m", "cfreeconv", "convolve", "fconv(bernoulli(1), semicircle(0, 1))", "--grid-n", "256"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and len(a) > 1000
