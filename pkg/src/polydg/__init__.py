"""polydg: polytopal discontinuous Galerkin solver for coupled
low-frequency poroelastic waves and unsteady free flow in 2D."""

__version__ = "0.1.0"
