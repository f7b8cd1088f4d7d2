from reltrack.main import *
