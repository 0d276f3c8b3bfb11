from rieszEL.grid.grid import GridProjectedGradient
from rieszEL.particles.particles import ParticleFlow

__version__ = '0.1.0'

reg_solvers = {
    'GridProjectedGradient': GridProjectedGradient,
    'ParticleFlow': ParticleFlow
}
