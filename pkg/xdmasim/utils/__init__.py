from xdmasim.utils.graph import *
from xdmasim.utils.numbers import *
from xdmasim.utils.search import *
