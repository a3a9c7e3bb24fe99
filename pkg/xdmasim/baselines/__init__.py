from xdmasim.baselines.reshape_accel import *
from xdmasim.baselines.sw_loop import *
