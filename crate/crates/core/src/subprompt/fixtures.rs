//! Reference sub-prompt texts used by tests and examples.

/// A short prompt with a detail that is easy to lose.
pub const SKATEBOARD_PROMPT: &str = "A cat without visible ears is riding.";

/// Five sub-prompts for [`SKATEBOARD_PROMPT`], coarsest first; the last one is
/// the enhanced prompt.
pub const SKATEBOARD_SUBPROMPTS: [&str; 5] = [
    "A cat rides a skateboard on a city street.",
    "A cat on a skateboard navigates a city street, balancing amidst people and cars.",
    "An earless cat rides a skateboard in a busy street, casting shadows, maintaining balance against a city backdrop.",
    "A sleek, earless cat skillfully rides a colorful skateboard on a bustling urban street, highlighted by sunlight shadows, showing agility and balance against a vibrant city backdrop.",
    "A sleek, earless cat gracefully rides a colorful skateboard amidst a bustling urban street, effortlessly navigating between pedestrians and vehicles. Sunlight casts dramatic shadows, highlighting the feline's agile, streamlined form as it maintains perfect balance, capturing a sense of motion and boldness against the vibrant city backdrop.",
];

/// The description used in the simplification template's worked example.
pub const BEACH_DESCRIPTION: &str = "A pristine sandy beach under a soft golden hour light, with fine grains of sand glistening in the warm sunlight. The shore is framed by gentle waves lapping at the dunes, creating a serene mood. Sparse details of seashells and driftwood add texture, inviting tranquility and relaxation.";

/// The four levels from the simplification template's worked example.
pub const BEACH_LEVELS: [&str; 4] = [
    "A beach with shiny sand and waves.",
    "A beach at sunset with shiny sand. Waves hit dunes. Seashells and driftwood add texture.",
    "A beach at golden hour with glistening sand. Waves lap at dunes, creating calm. Seashells and driftwood add texture.",
    "A sandy beach at golden hour, with glistening sand. Gentle waves lap at the dunes, creating a serene mood. Seashells and driftwood add texture.",
];
