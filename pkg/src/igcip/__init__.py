"""Desk-scale validation and sensitivity toolkit for image-guided cochlear
implant programming (IGCIP).

Subsystems:

* :mod:`igcip.geometry` -- exact mesh distance queries, rigid transforms, OFF I/O
* :mod:`igcip.phantom` -- parametric cochlea phantoms with ground-truth electrode chains
* :mod:`igcip.shape_model` -- statistical shape model, error-targeted perturbation
* :mod:`igcip.localization` -- synthetic post-op volumes, centers of intensity,
  exact chain assignment
* :mod:`igcip.correspondence` -- rigid ICP, model draping, segmentation error summaries
* :mod:`igcip.planner` -- distance-vs-frequency tables and electrode configuration
  selection
* :mod:`igcip.stats` -- paired tests, corrections, boxplot statistics
* :mod:`igcip.harness` -- study orchestration, rating sets, HTTP rating API
"""

__version__ = "0.1.0"
