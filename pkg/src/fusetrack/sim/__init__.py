from .scenario import Occlusion, Scenario, load_scenario, save_scenario
from .world import (GroundTruthLog, Pose, SimulationRun, follow_controller, gpr_training_data,
                    render_frame, run_scenario, simulate_sonar)
