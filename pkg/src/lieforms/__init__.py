"""Semi-Lagrangian and Eulerian Galerkin schemes for convection-diffusion of
differential forms on 2D simplicial meshes."""
from .mesh import SimplicialMesh, build_structured_mesh

__version__ = "0.1.0"

__all__ = ["SimplicialMesh", "build_structured_mesh"]
