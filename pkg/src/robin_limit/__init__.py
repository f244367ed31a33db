"""Numerical toolkit for the large-alpha limit of Robin Laplacian eigenvalues.

Submodules
----------
geometry     domains, triangle meshes, refinement and mesh IO
exact1d      closed-form interval spectra and torsion
separable    rectangle and disk reference spectra
fem          P1 assembly and Robin/Dirichlet eigensolvers
torsion      boundary torsional rigidity and its bounds
asymptotics  clusters, boundary Gram form, remainder functionals, rate fits
cli          the ``robin-limit`` command
"""

__version__ = "0.1.0"
