"""
nigrid
======

Networked nonlinear negative imaginary (NI) systems: node plants and edge
controllers wired through a graph incidence matrix, numerical certificates
for the NI and output strictly NI dissipation inequalities, a Lur'e-Postnikov
style Lyapunov function for the closed loop, and a power transmission grid
built on top of them, optionally with battery pairs acting as virtual lines.

Licence: MIT


Using
-----
      Just write in Python

      # Import nigrid
      import nigrid

      # Load a scenario file: buses, lines, battery edges, initial deviations
      scenario, config = nigrid.load_scenario("test/scenarios/triangle.json")

      # Simulate it; the report gathers dissipation, Lyapunov monotonicity,
      # domain membership and consensus verdicts
      report, trajectory = nigrid.run_experiment(scenario, config)
      print(report.passed, report.consensus)

      # Lyapunov function value along the run
      trajectory.w_hat

      # Build the networked system yourself and evaluate W at a state
      system = nigrid.assemble_grid_system(scenario)
      X_p, X_c = nigrid.initial_state(scenario)
      nigrid.eval_lyapunov_networked(system, X_p, X_c).value

      # The same from the command line
      #   nigrid simulate test/scenarios/triangle.json --out run/
      #   nigrid check test/scenarios/triangle.json --suite all
"""

from .exceptions import *
from .systems import *
from .network import *
from .lyapunov import *
from .grid import *
from .simulation import *
from .scenario import *
from .utils import *

from ._version import get_versions
__version__ = get_versions()['version']
del get_versions
