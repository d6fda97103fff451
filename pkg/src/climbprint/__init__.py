"""Planning, control and simulation for a wall-climbing extrusion printer.

The printer clamps onto a prefabricated starter wall (the footprint), rolls
along it while extruding, and climbs one layer at a time on its own freshly
printed wall.
"""

from .errors import ClimbPrintError
from .geometry import ArcLengthPath, PathSpec, resample
from .deposition import BeadSegment, MaterialModel, bead_width, deposited_volume
from .kinematics import DeviceConfig, DeviceState, Mode
from .planner import Design, Inclination, PrintMode, PrintPlan, compile_plan, footprint_check
from .controller import ControlRecord, ControlTrace, execute, replay, step
from .simulator import PrintedStructure, SimReport, export_obj, measure_inclination, simulate

__version__ = "0.1.0"
