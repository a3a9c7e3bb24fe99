from xdmasim.config.cfg import *
from xdmasim.config.layout import *
from xdmasim.config.pattern import *
from xdmasim.config.soc import *
