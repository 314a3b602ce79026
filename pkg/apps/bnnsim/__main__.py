from apps.bnnsim.main import run

run()
