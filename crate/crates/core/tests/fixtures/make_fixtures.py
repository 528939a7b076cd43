"""Writes the golden alignment and audio files from first principles."""
import math
import struct

ALIGN = [
    [0.5, 0.25, 0.0, 0.125],
    [0.0, 1.0, 0.3, 0.0],
    [0.1, 0.2, 0.7, 0.05],
]

SAMPLES = [0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -2.0, 0.1, -0.3, 0.999, 1.0 / 65536, -1.0 / 65536, 3.0 / 65536]


def sig9(v):
    if v == 0.0:
        return "0.00000000"
    exp = int(f"{v:.8e}".split("e")[1])
    return f"{v:.{max(8 - exp, 0)}f}"


def pgm(rows):
    top = max(max(r) for r in rows)
    px = bytes(min(255, max(0, int(math.floor(255 * v / top + 0.5)))) for r in rows for v in r)
    return f"P5\n{len(rows[0])} {len(rows)}\n255\n".encode() + px


def pcm16(v):
    v = min(max(v, -1.0), 32767 / 32768)
    x = v * 32768
    q = math.floor(abs(x) + 0.5)
    return int(math.copysign(q, x))


def wav(samples, rate):
    data = b"".join(struct.pack("<h", pcm16(s)) for s in samples)
    fmt = struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    return b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVEfmt " + fmt + b"data" + struct.pack("<I", len(data)) + data


with open("align.pgm", "wb") as f:
    f.write(pgm(ALIGN))
with open("align.csv", "w", newline="\n") as f:
    f.write("".join(",".join(sig9(v) for v in r) + "\n" for r in ALIGN))
with open("clip.wav", "wb") as f:
    f.write(wav(SAMPLES, 8000))
