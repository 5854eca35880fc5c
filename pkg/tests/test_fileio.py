import os
import struct
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lsdip import CineVolume, KSpaceData, forward, make_mask
from lsdip import fileio
from lsdip.fileio import (FormatError, read_coils, read_kspace, read_mask,
                          read_params, read_volume, write_coils, write_csv,
                          write_kspace, write_mask, write_params, write_pgm,
                          write_svg_lines, write_volume)
from conftest import random_coils, random_volume


def test_volume_round_trip_bitwise(tmp_path, rng):
    v = random_volume(rng, 16, 8, 3)
    path = str(tmp_path / "v.lsdv")
    write_volume(path, v)
    back = read_volume(path)
    assert np.array_equal(back.data, v.data)


def test_mask_round_trip(tmp_path):
    mask = make_mask(64, 4.0, 6, seed=11)
    path = str(tmp_path / "m.lsdv")
    write_mask(path, mask)
    back = read_mask(path)
    assert back.width == mask.width
    assert back.center_lines == mask.center_lines
    assert back.af == mask.af
    assert np.array_equal(back.selected, mask.selected)


def test_kspace_round_trip(tmp_path, rng):
    coils = random_coils(rng, 3, 16, 16)
    mask = make_mask(16, 2.0, 4, seed=5)
    y = forward(random_volume(rng, 16, 16, 2), coils, mask)
    path = str(tmp_path / "y.lsdv")
    write_kspace(path, y)
    back = read_kspace(path)
    assert np.array_equal(back.samples, y.samples)
    assert np.array_equal(back.mask.selected, y.mask.selected)


def test_coils_round_trip(tmp_path, rng):
    coils = random_coils(rng, 5, 8, 8)
    path = str(tmp_path / "c.lsdv")
    write_coils(path, coils)
    assert np.array_equal(read_coils(path).maps, coils.maps)


def test_params_round_trip(tmp_path, rng):
    values = rng.standard_normal(257)
    path = str(tmp_path / "p.lsdv")
    write_params(path, values)
    assert np.array_equal(read_params(path), values)


def test_bad_magic_rejected(tmp_path):
    path = str(tmp_path / "bad.lsdv")
    with open(path, "wb") as f:
        f.write(b"NOPE" + bytes(100))
    with pytest.raises(FormatError, match="magic"):
        read_volume(path)


def test_wrong_kind_rejected(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    path = str(tmp_path / "v.lsdv")
    write_volume(path, v)
    with pytest.raises(FormatError, match="kind"):
        read_mask(path)


def test_wrong_version_rejected(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    path = str(tmp_path / "v.lsdv")
    write_volume(path, v)
    blob = bytearray(open(path, "rb").read())
    blob[4:6] = struct.pack("<H", 9)
    open(path, "wb").write(bytes(blob))
    with pytest.raises(FormatError, match="version"):
        read_volume(path)


def test_truncated_payload_rejected(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    path = str(tmp_path / "v.lsdv")
    write_volume(path, v)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-7])
    with pytest.raises(FormatError, match="truncated"):
        read_volume(path)


def test_trailing_bytes_rejected(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    path = str(tmp_path / "v.lsdv")
    write_volume(path, v)
    with open(path, "ab") as f:
        f.write(b"xx")
    with pytest.raises(FormatError, match="trailing"):
        read_volume(path)


def test_zero_dimension_rejected(tmp_path):
    path = str(tmp_path / "z.lsdv")
    blob = (fileio.MAGIC + struct.pack("<HB", fileio.VERSION, 0)
            + struct.pack("<III", 0, 8, 2))
    open(path, "wb").write(blob)
    with pytest.raises(FormatError, match="out of range"):
        read_volume(path)


def test_mask_more_lines_than_width_rejected(tmp_path):
    path = str(tmp_path / "m.lsdv")
    blob = (fileio.MAGIC + struct.pack("<HB", fileio.VERSION, 2)
            + struct.pack("<IIdI", 8, 0, 2.0, 9) + bytes(9 * 4))
    open(path, "wb").write(blob)
    with pytest.raises(FormatError, match="lines"):
        read_mask(path)


def test_atomic_write_leaves_no_temp_files(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    write_volume(str(tmp_path / "v.lsdv"), v)
    leftovers = [n for n in os.listdir(tmp_path) if n.startswith(".lsdv-tmp")]
    assert leftovers == []


def test_pgm_format(tmp_path):
    img = np.linspace(0.0, 1.0, 12).reshape(3, 4)
    path = str(tmp_path / "i.pgm")
    write_pgm(path, img, window=(0.0, 1.0))
    blob = open(path, "rb").read()
    assert blob.startswith(b"P5\n4 3\n255\n")
    pixels = np.frombuffer(blob[len(b"P5\n4 3\n255\n"):], dtype=np.uint8)
    assert pixels.size == 12
    assert pixels[0] == 0 and pixels[-1] == 255


def test_pgm_windowing_clips(tmp_path):
    img = np.array([[-1.0, 0.5, 2.0]])
    path = str(tmp_path / "i.pgm")
    write_pgm(path, img, window=(0.0, 1.0))
    pixels = open(path, "rb").read()[-3:]
    assert pixels[0] == 0 and pixels[2] == 255


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(str(tmp_path / "x.pgm"), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        write_pgm(str(tmp_path / "x.pgm"), np.array([[np.nan]]))


def test_svg_is_wellformed_xml(tmp_path):
    x = np.arange(10.0)
    path = str(tmp_path / "p.svg")
    write_svg_lines(path, [(x, np.sin(x), "sin"), (x, np.cos(x), "cos")],
                    title="t", xlabel="x", ylabel="y")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(polylines) == 2


def test_svg_skips_nonfinite_points(tmp_path):
    x = np.arange(5.0)
    y = np.array([1.0, np.nan, 2.0, np.inf, 3.0])
    path = str(tmp_path / "p.svg")
    write_svg_lines(path, [(x, y, "")])
    root = ET.parse(path).getroot()
    poly = next(e for e in root.iter() if e.tag.endswith("polyline"))
    assert len(poly.get("points").split()) == 3


def test_csv_rfc4180(tmp_path):
    path = str(tmp_path / "t.csv")
    write_csv(path, ["a", "b,c"], [[1, 'say "hi"'], [2.5, "plain"]])
    blob = open(path, "rb").read()
    assert blob == b'a,"b,c"\r\n1,"say ""hi"""\r\n2.5,plain\r\n'


def test_csv_float_repr_round_trips(tmp_path):
    vals = [0.1, 1e-17, 3.141592653589793]
    path = str(tmp_path / "f.csv")
    write_csv(path, ["v"], [[v] for v in vals])
    lines = open(path, "rb").read().decode().split("\r\n")[1:-1]
    assert [float(s) for s in lines] == vals


def test_repeated_writes_byte_identical(tmp_path, rng):
    v = random_volume(rng, 8, 8, 2)
    p1, p2 = str(tmp_path / "a.lsdv"), str(tmp_path / "b.lsdv")
    write_volume(p1, v)
    write_volume(p2, v)
    assert open(p1, "rb").read() == open(p2, "rb").read()
