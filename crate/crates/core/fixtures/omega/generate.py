"""Writes the expected omega masks from the geometric descriptions alone."""

N = 21
H = 1.0 / (N - 1)


def closed(box, x, y):
    x0, x1, y0, y1 = box
    e = 1e-12
    return x0 - e <= x <= x1 + e and y0 - e <= y <= y1 + e


def write(name, keep):
    rows = []
    for j in reversed(range(N)):
        row = ""
        for i in range(N):
            interior = 0 < i < N - 1 and 0 < j < N - 1
            row += "#" if interior and keep(i * H, j * H) else "."
        rows.append(row)
    with open(f"{name}.txt", "w") as f:
        f.write("\n".join(rows) + "\n")


write("example_i", lambda x, y: True)
write("example_i_point", lambda x, y: not (abs(x - 0.5) < 1e-12 and abs(y - 0.5) < 1e-12))
write("example_ii", lambda x, y: not closed((0.2, 0.4, 0.5, 0.8), x, y) and not closed((0.6, 0.8, 0.2, 0.4), x, y))
write("example_iii", lambda x, y: not closed((0.25, 0.75, 0.25, 0.75), x, y))
