use serde::{Deserialize, Serialize};

/// One agricultural topic: the phrase used in brief descriptions and the
/// video titles that may be drawn for a room about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic_id: usize,
    pub phrase: String,
    pub titles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicVocabulary {
    pub entries: Vec<TopicEntry>,
}

const BUILTIN: &[(&str, [&str; 4])] = &[
    ("growing indoor vegetables", ["Indoor Vegetable Growing", "Vegetables On A Windowsill", "Grow Lights For Leafy Greens", "Apartment Salad Garden"]),
    ("plant potato", ["Planting Seed Potatoes", "Hilling Potato Rows", "Harvesting New Potatoes", "Potatoes In Grow Bags"]),
    ("taking care of lemon trees", ["Pruning A Lemon Tree", "Feeding Citrus In Pots", "Lemon Tree Leaf Problems", "Overwintering Lemon Trees"]),
    ("growing tomatoes", ["Staking Tomato Plants", "Pinching Tomato Suckers", "Tomato Blight Prevention", "Saving Tomato Seeds"]),
    ("beekeeping", ["Inspecting A Beehive", "Harvesting Honey Frames", "Catching A Honeybee Swarm", "Winter Care For Bees"]),
    ("raising backyard chickens", ["Building A Chicken Coop", "Feeding Laying Hens", "Collecting Fresh Eggs", "Keeping Chickens Healthy"]),
    ("composting", ["Starting A Compost Pile", "Turning Hot Compost", "Worm Bin Basics", "Using Finished Compost"]),
    ("drip irrigation", ["Laying Drip Tape", "Drip Emitter Spacing", "Timers For Garden Watering", "Flushing Irrigation Lines"]),
    ("growing strawberries", ["Planting Strawberry Runners", "Strawberry Bed Mulching", "Picking Ripe Strawberries", "Strawberries In Hanging Baskets"]),
    ("pruning apple trees", ["Winter Apple Tree Pruning", "Thinning Young Apples", "Grafting Apple Scions", "Training A Young Apple Tree"]),
    ("growing garlic", ["Planting Garlic Cloves", "Garlic Scape Harvest", "Curing Garlic Bulbs", "Softneck Versus Hardneck Garlic"]),
    ("hydroponics", ["Building A Hydroponic Tower", "Nutrient Solution Mixing", "Deep Water Culture Lettuce", "Hydroponic pH Control"]),
    ("mushroom cultivation", ["Oyster Mushrooms On Straw", "Inoculating Shiitake Logs", "Mushroom Grow Bag Setup", "Harvesting Lion's Mane"]),
    ("raising goats", ["Milking A Dairy Goat", "Goat Hoof Trimming", "Fencing For Goats", "Kidding Season Preparation"]),
    ("growing rice", ["Transplanting Rice Seedlings", "Flooding Rice Paddies", "Threshing Harvested Rice", "Upland Rice Cultivation"]),
    ("vineyard management", ["Pruning Grape Vines", "Canopy Management In Vineyards", "Grape Harvest Timing", "Trellising New Vines"]),
    ("olive farming", ["Olive Tree Pruning", "Harvesting Olives By Hand", "Curing Green Olives", "Olive Oil Pressing"]),
    ("soil testing", ["Taking A Soil Sample", "Reading A Soil Test Report", "Correcting Soil Acidity", "Home Soil Texture Test"]),
    ("cover crops", ["Sowing Winter Rye", "Clover As Green Manure", "Terminating Cover Crops", "Cover Crop Mixtures"]),
    ("growing carrots", ["Sowing Carrot Seeds", "Thinning Carrot Seedlings", "Carrots In Heavy Soil", "Storing Carrots Over Winter"]),
    ("growing onions", ["Planting Onion Sets", "Onions From Seed", "Curing Onions After Harvest", "Braiding Onion Bulbs"]),
    ("raising rabbits", ["Rabbit Hutch Design", "Feeding Meat Rabbits", "Rabbit Breeding Basics", "Rabbit Manure For Gardens"]),
    ("growing herbs", ["Growing Basil Indoors", "Propagating Rosemary Cuttings", "Drying Garden Herbs", "Mint In Containers"]),
    ("greenhouse management", ["Greenhouse Ventilation", "Heating A Small Greenhouse", "Greenhouse Bench Layout", "Shading A Greenhouse"]),
    ("growing corn", ["Planting Sweet Corn Blocks", "Corn Pollination Explained", "Harvesting Sweet Corn", "Three Sisters Planting"]),
    ("dairy cattle care", ["Milking Parlor Routine", "Calf Feeding Schedule", "Cow Comfort In Barns", "Mastitis Prevention"]),
    ("growing peppers", ["Starting Pepper Seeds", "Overwintering Chili Plants", "Roasting Harvested Peppers", "Pepper Plant Support"]),
    ("organic pest control", ["Neem Oil Spraying", "Attracting Ladybugs", "Companion Planting Against Pests", "Row Covers For Insects"]),
    ("growing blueberries", ["Acidifying Soil For Blueberries", "Planting Blueberry Bushes", "Netting Blueberries From Birds", "Pruning Blueberry Canes"]),
    ("seed saving", ["Saving Bean Seeds", "Fermenting Cucumber Seeds", "Seed Storage Containers", "Germination Testing At Home"]),
    ("growing cucumbers", ["Trellising Cucumbers", "Pickling Cucumber Varieties", "Hand Pollinating Cucumbers", "Cucumbers In Containers"]),
    ("fish farming", ["Backyard Tilapia Pond", "Aquaponics System Startup", "Feeding Farmed Trout", "Pond Water Aeration"]),
    ("growing wheat", ["Sowing Winter Wheat", "Harvesting Wheat With A Sickle", "Winnowing Grain By Hand", "Milling Flour At Home"]),
    ("sheep farming", ["Shearing A Sheep", "Lambing Season Tips", "Rotational Grazing For Sheep", "Sheep Foot Care"]),
    ("growing pumpkins", ["Planting Pumpkin Hills", "Growing Giant Pumpkins", "Curing Pumpkins For Storage", "Pumpkin Vine Training"]),
    ("raised bed gardening", ["Building A Raised Bed", "Filling Raised Beds Cheaply", "Raised Bed Crop Rotation", "Hugelkultur Raised Beds"]),
    ("growing lettuce", ["Cut And Come Again Lettuce", "Succession Sowing Lettuce", "Lettuce In Summer Heat", "Growing Romaine Heads"]),
    ("orchard grafting", ["Whip And Tongue Grafting", "Cleft Grafting Fruit Trees", "Chip Budding Technique", "Choosing Rootstocks"]),
    ("growing beans", ["Pole Bean Teepees", "Bush Bean Succession", "Drying Beans On The Vine", "Fava Beans In Spring"]),
    ("rainwater harvesting", ["Installing A Rain Barrel", "Swales For Water Retention", "Gutter To Tank Setup", "Filtering Harvested Rainwater"]),
    ("growing avocados", ["Avocado From A Pit", "Planting Grafted Avocados", "Avocado Tree Watering", "Ripening Picked Avocados"]),
    ("tractor maintenance", ["Changing Tractor Oil", "Greasing Tractor Fittings", "Tractor Tire Pressure", "Hitching A Three Point Implement"]),
    ("growing cabbage", ["Transplanting Cabbage Starts", "Cabbage Worm Control", "Making Sauerkraut From Cabbage", "Savoy Cabbage In Autumn"]),
    ("permaculture design", ["Mapping Permaculture Zones", "Food Forest Layers", "Sheet Mulching A Lawn", "Designing A Keyhole Garden"]),
];

impl TopicVocabulary {
    /// The built-in agricultural topic list.
    pub fn builtin() -> Self {
        let entries = BUILTIN
            .iter()
            .enumerate()
            .map(|(topic_id, (phrase, titles))| TopicEntry {
                topic_id,
                phrase: (*phrase).to_string(),
                titles: titles.iter().map(|t| (*t).to_string()).collect(),
            })
            .collect();
        TopicVocabulary { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, topic_id: usize) -> Option<&TopicEntry> {
        self.entries.get(topic_id)
    }

    /// Smallest number of titles any topic offers.
    pub fn min_titles(&self) -> usize {
        self.entries.iter().map(|e| e.titles.len()).min().unwrap_or(0)
    }

    pub fn topic_of_title(&self, title: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.titles.iter().any(|t| t == title))
            .map(|e| e.topic_id)
    }

    pub fn topic_of_phrase(&self, phrase: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.phrase == phrase)
            .map(|e| e.topic_id)
    }
}

impl Default for TopicVocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn builtin_has_enough_distinct_topics() {
        let v = TopicVocabulary::builtin();
        assert!(v.len() >= 40);
        let phrases: HashSet<_> = v.entries.iter().map(|e| &e.phrase).collect();
        assert_eq!(phrases.len(), v.len());
        assert!(v.min_titles() >= 4);
    }

    #[test]
    fn titles_are_globally_unique_and_split_safe() {
        let v = TopicVocabulary::builtin();
        let mut seen = HashSet::new();
        for e in &v.entries {
            for t in &e.titles {
                assert!(seen.insert(t.clone()), "duplicate title {t}");
                assert!(!t.contains('.'), "title {t} would break sentence splitting");
                assert_eq!(v.topic_of_title(t), Some(e.topic_id));
            }
            assert_eq!(v.topic_of_phrase(&e.phrase), Some(e.topic_id));
        }
    }
}
