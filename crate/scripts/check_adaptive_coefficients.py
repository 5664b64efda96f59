"""Symbolic cross-check of the adaptive h^4 bias coefficient.

Builds the integrand A(u; x0) from the Taylor expansion of
g_u(c(x0 + h u)) - g_u(1) with g_u(v) = v^(d+2) k(v u), reduces every
integral of (monomial) x (kernel partial) to plain kernel moments by
integration by parts, and compares with the closed forms implemented in
the Rust crate (d = 1 bracket, d = 2 V4*C4 + V2*C2).
"""
import itertools
import sympy as sp

V4, V2 = sp.symbols("V4 V2")


def moment(exps):
    # integral of u^exps * kernel, for total degree 4 only
    if any(e % 2 for e in exps):
        return 0
    deg = sum(exps)
    assert deg == 4, exps
    if max(exps) == 4:
        return V4
    return V2


def ibp(exps, deriv):
    """integral of u^exps * D^deriv kernel via integration by parts."""
    exps = list(exps)
    coef = 1
    for i, k in enumerate(deriv):
        for _ in range(k):
            if exps[i] == 0:
                return 0
            coef *= -exps[i]
            exps[i] -= 1
    return coef * moment(exps)


def integrate_poly(poly, uvars, deriv):
    poly = sp.Poly(sp.expand(poly), *uvars)
    total = 0
    for mon, c in poly.terms():
        total += c * ibp(mon, deriv)
    return sp.expand(total)


def multi_indices(d, k):
    for combo in itertools.combinations_with_replacement(range(d), k):
        idx = [0] * d
        for c in combo:
            idx[c] += 1
        yield tuple(idx)


def gu_parts(d, order):
    """g_u^(order)(1) as list of (coefficient, j) meaning coefficient * D^j k(u)(u,...,u)."""
    # g_u^(m)(1) = sum_j binom(m,j) * falling(d+2, m-j) * D^j k(u)(u^j)
    out = []
    for j in range(order + 1):
        ff = sp.ff(d + 2, order - j)
        out.append((sp.binomial(order, j) * ff, j))
    return out


def integral_A(d):
    u = sp.symbols(f"u1:{d+1}")
    # symbolic derivative tensors of c at x0 (symmetric)
    C = {}
    for k in range(1, 5):
        for mi in multi_indices(d, k):
            name = "c_" + "".join(str(i + 1) * m for i, m in enumerate(mi))
            C[mi] = sp.Symbol(name)

    def Dk(k):
        # D^k c(x0)(u,...,u) as polynomial
        s = 0
        for mi in multi_indices(d, k):
            mult = sp.factorial(k)
            mon = 1
            for i, m in enumerate(mi):
                mult /= sp.factorial(m)
                mon *= u[i] ** m
            s += mult * C[mi] * mon
        return s

    D1, D2, D3, D4 = Dk(1), Dk(2), Dk(3), Dk(4)
    terms = {
        1: D4 / 24,
        2: sp.Rational(1, 2) * (D1 * D3 / 3 + D2**2 / 4),
        3: sp.Rational(1, 4) * D1**2 * D2,
        4: D1**4 / 24,
    }
    total = 0
    for order, poly in terms.items():
        for coef, j in gu_parts(d, order):
            # D^j k(u)(u,..,u) = sum over multi-index beta |beta|=j of multinomial * u^beta * D^beta k
            for beta in multi_indices(d, j):
                mult = sp.factorial(j)
                mon = 1
                for i, m in enumerate(beta):
                    mult /= sp.factorial(m)
                    mon *= u[i] ** m
                total += coef * mult * integrate_poly(poly * mon, u, beta)
    return sp.expand(total), C


def main():
    a1, C1 = integral_A(1)
    c1, c2, c3, c4 = (C1[(k,)] for k in range(1, 5))
    closed1 = V4 * (-c4 / 12 + c3 * c1 + sp.Rational(3, 4) * c2**2 - 6 * c2 * c1**2 + 5 * c1**4)
    print("d=1 difference:", sp.simplify(a1 - closed1))

    # lambda-ratio bracket for d=1: substitute c derivatives of sqrt(lambda/lambda0)
    x = sp.Symbol("x")
    lam = sp.Function("lam")(x)
    c = sp.sqrt(lam / lam.subs(x, 0))
    cd = [sp.diff(c, x, k).subs(x, 0) for k in range(1, 5)]
    sub = dict(zip((c1, c2, c3, c4), cd))
    L = [sp.diff(lam, x, k).subs(x, 0) for k in range(0, 5)]
    bracket = (-L[4] / L[0] + 8 * L[3] * L[1] / L[0] ** 2 + 6 * L[2] ** 2 / L[0] ** 2
               - 36 * L[2] * L[1] ** 2 / L[0] ** 3 + 24 * L[1] ** 4 / L[0] ** 4)
    print("d=1 lambda bracket difference:", sp.simplify(a1.subs(sub) - V4 * bracket / 24))
    b = sp.Symbol("beta")
    lam0 = sp.Symbol("lam0", positive=True)
    loglin = sp.simplify(bracket.subs({L[k]: lam0 * b**k for k in range(4, -1, -1)}))
    print("d=1 log-linear bracket (expect beta**4):", loglin)

    a2, C2s = integral_A(2)
    g = lambda *mi: C2s[mi]
    D1c, D2c = g(1, 0), g(0, 1)
    D11, D22, D12 = g(2, 0), g(0, 2), g(1, 1)
    D111, D222, D112, D122 = g(3, 0), g(0, 3), g(2, 1), g(1, 2)
    D1111, D2222, D1122 = g(4, 0), g(0, 4), g(2, 2)
    C4 = sum(-d4 / 12 + d1 * d3 + sp.Rational(3, 4) * d2**2 - 6 * d1**2 * d2 + 5 * d1**4
             for d1, d2, d3, d4 in ((D1c, D11, D111, D1111), (D2c, D22, D222, D2222)))
    C2 = (30 * D1c**2 * D2c**2 - 6 * D1c**2 * D22 - 6 * D2c**2 * D11 - 24 * D1c * D2c * D12
          + 3 * D1c * D122 + 3 * D2c * D112 + sp.Rational(3, 2) * D11 * D22 + 3 * D12**2
          - sp.Rational(1, 2) * D1122)
    diff = sp.expand(a2 - (V4 * C4 + V2 * C2))
    print("d=2 difference:", diff)


if __name__ == "__main__":
    main()
