#!/usr/bin/env python3
"""Regenerates the frozen TLSH vectors in tests/unit/tlsh_vectors.inc.

Requires the reference implementation's Python binding (pip install py-tlsh).
Inputs are produced by a splitmix64 stream that the C++ tests replicate, so
nothing but the expected digests and distances is stored.
"""
import sys
import tlsh

MASK = (1 << 64) - 1


def splitmix_bytes(seed, n, printable):
    state = seed & MASK
    out = bytearray()
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z ^= z >> 31
        b = z >> 56
        if printable:
            b = 32 + (z % 95)
        out.append(b)
    return bytes(out)


CASES = [
    (1, 50, False), (2, 51, False), (3, 64, False), (4, 100, False),
    (5, 255, False), (6, 256, False), (7, 656, False), (8, 657, False),
    (9, 1000, False), (10, 3199, False), (11, 3200, False), (12, 4096, False),
    (13, 65536, False), (14, 1000000, False),
    (21, 50, True), (22, 60, True), (23, 80, True), (24, 120, True),
    (25, 200, True), (26, 512, True), (27, 2048, True),
]

SAMPLE_LINES = [
    r'"C:\Windows\System32\rundll32.exe" shwebsvc.dll,AddNetPlaceRunDll',
    r'"C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" '
    r"((New-Object System.Net.WebClient).OpenRead('https://www.google.com')).CanRead",
    r'"C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" '
    r"((New-Object System.Net.WebClient).OpenRead('https://www.microsoft.com')).CanRead",
]


def main():
    w = sys.stdout.write
    w("// Generated by tests/oracles/tlsh_vectors.py from the reference TLSH binding.\n")
    w("// {seed, length, printable, expected digest}\n")
    w("static const RandomVector kRandomVectors[] = {\n")
    digests = []
    for seed, n, printable in CASES:
        h = tlsh.hash(splitmix_bytes(seed, n, printable))
        digests.append(h)
        w(f'    {{{seed}u, {n}u, {"true" if printable else "false"}, "{h}"}},\n')
    w("};\n\n")
    w("// {index a, index b, expected distance} into kRandomVectors\n")
    w("static const PairVector kRandomPairs[] = {\n")
    for i in range(len(digests)):
        for j in range(i + 1, len(digests)):
            if (i * 7 + j) % 5 == 0:
                w(f"    {{{i}, {j}, {tlsh.diff(digests[i], digests[j])}}},\n")
    w("};\n\n")
    app = [tlsh.hash(s.encode()) for s in SAMPLE_LINES]
    w("static const char* const kSampleDigests[] = {\n")
    for h in app:
        w(f'    "{h}",\n')
    w("};\n")
    w(f"static const int kSampleDistances[3] = {{{tlsh.diff(app[0], app[1])}, "
      f"{tlsh.diff(app[0], app[2])}, {tlsh.diff(app[1], app[2])}}};\n\n")
    # Low-complexity inputs the reference refuses to hash.
    for text in [b"a" * 100, b"ab" * 60]:
        assert tlsh.hash(text) == "TNULL", text
    w("// Reference returns TNULL for: 'a' x 100, 'ab' x 60\n")


if __name__ == "__main__":
    main()
