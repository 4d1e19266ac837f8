use super::ProblemKind;

/// Published summary of a benchmark dataset. Only iris ships with the crate;
/// the others are expected at `<data_dir>/<name>.csv` with a user-supplied
/// schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetDescriptor {
    pub name: &'static str,
    pub problem: ProblemKind,
    pub attributes: usize,
    pub classes: Option<usize>,
    pub instances: usize,
    pub batch_size: usize,
    /// Steps per epoch as listed, counted over all instances.
    pub listed_steps: usize,
}

const fn class(
    name: &'static str,
    attributes: usize,
    classes: usize,
    instances: usize,
    batch_size: usize,
    listed_steps: usize,
) -> DatasetDescriptor {
    DatasetDescriptor {
        name,
        problem: ProblemKind::Classification,
        attributes,
        classes: Some(classes),
        instances,
        batch_size,
        listed_steps,
    }
}

const fn reg(
    name: &'static str,
    attributes: usize,
    instances: usize,
    batch_size: usize,
    listed_steps: usize,
) -> DatasetDescriptor {
    DatasetDescriptor {
        name,
        problem: ProblemKind::Regression,
        attributes,
        classes: None,
        instances,
        batch_size,
        listed_steps,
    }
}

pub const DATASETS: [DatasetDescriptor; 14] = [
    class("iris", 4, 3, 150, 16, 10),
    class("car", 6, 4, 1728, 128, 14),
    class("abalone", 8, 28, 4177, 256, 17),
    class("wine_quality", 12, 11, 4898, 256, 20),
    class("mushroom", 22, 2, 8214, 512, 17),
    class("bank", 17, 2, 45211, 512, 89),
    class("diabetic", 55, 3, 100000, 1024, 98),
    reg("fish_toxicity", 7, 908, 64, 15),
    reg("housing", 13, 506, 32, 16),
    reg("forest_fires", 13, 517, 32, 17),
    reg("student_performance", 33, 649, 32, 21),
    reg("parkinsons", 26, 5875, 256, 23),
    reg("air_quality", 15, 9358, 256, 37),
    reg("bike", 16, 17389, 256, 68),
];

pub fn descriptor(name: &str) -> Option<&'static DatasetDescriptor> {
    let key = name.replace([' ', '-'], "_").to_ascii_lowercase();
    DATASETS.iter().find(|d| d.name == key)
}
