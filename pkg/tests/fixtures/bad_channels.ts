@problemName bad
@dimensions 2
@seriesLength 6
@equalLength true
@classLabel true up down
@data
1.0,2.0,3.0,4.0,5.0,6.0:0.1,0.2,0.3,0.4,0.5,0.6:up
1.0,2.0,3.0,4.0,5.0,6.0:0.1,0.2,0.3,0.4,0.5,0.6:0.1,0.2,0.3,0.4,0.5,0.6:down
