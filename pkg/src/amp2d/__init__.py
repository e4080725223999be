"""amp2d: adversarial motion priors for planar physics-based characters.

Training couples a goal-conditioned PPO policy with a least-squares adversarial
discriminator that scores motion transitions against a reference clip dataset,
on top of a deterministic 2D articulated rigid-body simulator. See README.md
for the CLI and the acceptance suite.
"""

__version__ = "0.1.0"
