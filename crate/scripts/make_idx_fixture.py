"""Writes the small IDX fixtures used by crates/core/tests/data.rs."""
import struct
from pathlib import Path

out = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"
out.mkdir(parents=True, exist_ok=True)

pixels = [0, 51, 102, 153, 204, 255, 1, 2, 3,
          255, 254, 253, 0, 0, 0, 17, 34, 68]
(out / "two-3x3-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, 2, 3, 3) + bytes(pixels))
(out / "two-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, 2) + bytes([7, 3]))
