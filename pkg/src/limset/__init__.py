"""limset: a numerical laboratory for limit sets of Schottky groups.

The package constructs convex cocompact (Schottky) groups of isometries of
real hyperbolic space H^{d+1} in the quadratic-form matrix model, approximates
their Patterson-Sullivan measures and unstable horospherical conditionals, and
measures Fourier decay, L2 flattening, and affine non-concentration of the
resulting fractal measures.  The closed-form N-MAN+ holonomy formulas are
implemented exactly and property-tested against the matrix factorization.
"""

__version__ = "0.1.0"


def fixture_path(name):
    """Filesystem path of a packaged example group file (e.g. 'reference')."""
    from importlib.resources import files
    fname = name if name.endswith(".group") else name + ".group"
    return str(files("limset") / "fixtures" / fname)


from limset import core, dimension, fourier, holonomy, measure, nonconc, schottky

__all__ = [
    "core",
    "dimension",
    "fourier",
    "holonomy",
    "measure",
    "nonconc",
    "schottky",
    "fixture_path",
    "__version__",
]
