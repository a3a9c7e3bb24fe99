from xdmasim.hw.backend import *
from xdmasim.hw.controller import *
from xdmasim.hw.frontend import *
from xdmasim.hw.interconnect import *
from xdmasim.hw.memory import *
from xdmasim.hw.plugins import *
from xdmasim.hw.soc import *
