#include "iclv/lvd.hpp"

namespace iclv::lvd {

std::string_view base_prompt() {
  static constexpr std::string_view text = R"PROMPT(Instructions for Describing Bicycle Image Sequences:
For each image sequence, provide a detailed description based on the following
characteristics:

LaneType: Single word describing if the bicycle lane is:
"dedicated"
"shared"
"does not exist"

Type of bicycle lane separation: Description of the type of separation between the bike lane
and the rest of the road:

"Physical"
"visual"
"none"

TrafficSignal: Traffic signal facing the cyclist:
"Green"
"Red"
"Not identifiable" if no clear color is seen on the traffic light
"Not present" if there is no traffic light in the images.

Signage: Concise list of observed traffic signs:
Examples: "bike route", "yield", "stop", "no parking", "no turn", "crossing warning",
"none".

VehicleProximity: Proximity of moving vehicles:
Car: "High", "Medium", "Low", "Not present"
Truck: "High", "Medium", "Low", "Not present"
Motorcycle: "High", "Medium", "Low", "Not present"
Bicycle: "High", "Medium", "Low", "Not present"

Type of Nearby Pedestrian: Proximity of pedestrians:
Adult: "High", "Medium", "Low", "Not present"
Child: "High", "Medium", "Low", "Not present"
Group: "High", "Medium", "Low", "Not present"
Pet: "High", "Medium", "Low", "Not present"

Road Condition: General state of the pavement:
"good"
"fair"
"poor"

Presence of potholes: Indication of potholes on the road:
"present"
"not present"

Pedestrian Activity: General proximity of pedestrians:
"High"
"Medium"
"Low"

Obstructions: Presence of obstructions in the middle of the path:
"Present"
"Not present"

WeatherCondition: Weather condition during the sequence:
"Sunny"
"Cloudy"

CyclistStressLevel: Subjective stress level of the cyclist based on the entire environment:
"High"
"Medium"
"Low"

StressLevelDescription: Justified description explaining why the CyclistStressLevel was assigned.

Special Events: Record of any special event that may affect the cyclist's stress or require them
to react in some way:
"Present"
"Not present"
Examples: a vehicle or person passing very close, an obstacle on the route, a vehicle that
crosses in the middle of the path, etc.

Road Works: "Present", "Not present"

Presence of Other Cyclists: "High", "Medium", "Low", "Not present"

Cyclist Infrastructure: Quality of the bike lane:
"good"
"fair"
"poor"

Considerations: The images were obtained from a fixed route within Santiago de Chile; some
bike lanes may not look as usual. In many cases, when smaller areas separated with some type
of lane delineator are seen, it means there is a bike lane present.
All images are captured from a GoPro mounted on the bicycle's handlebar. Since the
cyclist tends to tilt the handlebar when stopping, some images may appear tilted
from the street's perspective. Each sequence is approximately 5 seconds long.
)PROMPT";
  return text;
}

}  // namespace iclv::lvd
