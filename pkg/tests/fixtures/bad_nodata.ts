@problemName bad
@dimensions 2
@seriesLength 6
@equalLength true
@classLabel true up down
